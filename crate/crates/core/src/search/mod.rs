//! Greedy and beam-search decoding, unknown-word replacement and ensembles.

mod session;

use std::collections::HashMap;
use std::path::Path;

pub use session::{check_compatible, Ensemble, ModelSession, SessionState, StepOutput, StepScorer};

use crate::corpus::{LengthStats, EOS_ID, UNK};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Translation {
    /// Emitted word ids, `EOS` excluded.
    pub tokens: Vec<usize>,
    /// Summed log-probability of every emitted word, `EOS` included.
    pub log_prob: f64,
    /// Final ranking score (length-normalised, with the length prior when given).
    pub score: f64,
    pub finished: bool,
    /// Attention over the source positions for each entry of `tokens`.
    pub attention: Vec<Vec<f64>>,
}

/// `(Σ log p + log p(L_y | L_x)) / L_y`, or plain length normalisation without statistics.
///
/// An empty output has no defined score and ranks last.
pub fn sequence_score(log_prob: f64, target_len: usize, source_len: usize, lengths: Option<&LengthStats>) -> f64 {
    if target_len == 0 {
        return f64::NEG_INFINITY;
    }
    let prior = lengths.map_or(0.0, |l| l.log_prob(source_len, target_len));
    (log_prob + prior) / target_len as f64
}

fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (k, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = k;
        }
    }
    best
}

/// Picks the most probable word at each step (lowest id on ties) for at most `max_len` steps.
pub fn greedy<S: StepScorer>(scorer: &mut S, max_len: usize) -> Result<Translation> {
    let (mut state, mut out) = scorer.start()?;
    let mut t = Translation { tokens: vec![], log_prob: 0.0, score: 0.0, finished: false, attention: vec![] };
    for step in 0..max_len {
        let w = argmax(&out.probs);
        t.log_prob += out.probs[w].ln();
        if w == EOS_ID {
            t.finished = true;
            break;
        }
        t.tokens.push(w);
        t.attention.push(out.attention);
        if step + 1 == max_len {
            break;
        }
        (state, out) = scorer.step(&state, w)?;
    }
    t.score = sequence_score(t.log_prob, t.tokens.len(), 0, None);
    Ok(t)
}

struct Hyp<S> {
    tokens: Vec<usize>,
    log_prob: f64,
    state: S,
    out: StepOutput,
    attention: Vec<Vec<f64>>,
}

/// Beam search pruned by summed log-probability; finished hypotheses are
/// ranked by [`sequence_score`]. For beams wider than one the greedy path
/// competes as an extra finished candidate.
pub fn beam_search<S: StepScorer>(
    scorer: &mut S,
    beam: usize,
    max_len: usize,
    source_len: usize,
    lengths: Option<&LengthStats>,
) -> Result<Translation> {
    if beam == 0 {
        return Err(Error::Config("beam size must be at least 1".into()));
    }
    let (state, out) = scorer.start()?;
    let mut live = vec![Hyp { tokens: vec![], log_prob: 0.0, state, out, attention: vec![] }];
    let mut finished: Vec<Translation> = vec![];
    if beam > 1 {
        let mut g = greedy(scorer, max_len)?;
        if g.finished {
            g.score = sequence_score(g.log_prob, g.tokens.len(), source_len, lengths);
            finished.push(g);
        }
    }
    let mut unfinished: Vec<Translation> = vec![];
    for step in 0..max_len {
        let mut candidates: Vec<(f64, usize, usize)> = Vec::with_capacity(live.len() * beam);
        for (hi, h) in live.iter().enumerate() {
            let mut own: Vec<(f64, usize, usize)> =
                h.out.probs.iter().enumerate().map(|(w, &p)| (h.log_prob + p.ln(), w, hi)).collect();
            let keep = beam.min(own.len());
            own.select_nth_unstable_by(keep - 1, rank);
            own.truncate(keep);
            candidates.extend(own);
        }
        candidates.sort_by(rank);
        candidates.truncate(beam);
        let last = step + 1 == max_len;
        let mut next = vec![];
        for &(log_prob, w, hi) in &candidates {
            let h = &live[hi];
            if w == EOS_ID {
                let score = sequence_score(log_prob, h.tokens.len(), source_len, lengths);
                finished.push(Translation {
                    tokens: h.tokens.clone(),
                    log_prob,
                    score,
                    finished: true,
                    attention: h.attention.clone(),
                });
                continue;
            }
            let mut tokens = h.tokens.clone();
            tokens.push(w);
            let mut attention = h.attention.clone();
            attention.push(h.out.attention.clone());
            if last {
                unfinished.push(Translation { tokens, log_prob, score: log_prob, finished: false, attention });
            } else {
                let (state, out) = scorer.step(&h.state, w)?;
                next.push(Hyp { tokens, log_prob, state, out, attention });
            }
        }
        live = next;
        if finished.len() >= beam + usize::from(beam > 1) || live.is_empty() {
            break;
        }
    }
    let best = |v: Vec<Translation>| {
        v.into_iter().reduce(|a, b| if b.score > a.score { b } else { a })
    };
    match best(finished) {
        Some(t) => Ok(t),
        None => {
            log::warn!("no hypothesis finished within {max_len} steps; returning the best unfinished one");
            best(unfinished).ok_or_else(|| Error::Invalid("beam search produced no hypothesis".into()))
        }
    }
}

/// Higher log-probability first, then lower word id, then earlier hypothesis.
fn rank(a: &(f64, usize, usize), b: &(f64, usize, usize)) -> std::cmp::Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
}

/// Replaces each `UNK` output with the dictionary entry for (or a copy of) its
/// most attended source word. `EOS` is never a replacement source.
pub fn replace_unknowns<S: AsRef<str>>(
    tokens: &[String],
    attention: &[Vec<f64>],
    source: &[S],
    dictionary: Option<&HashMap<String, String>>,
) -> Vec<String> {
    tokens
        .iter()
        .enumerate()
        .map(|(t, tok)| {
            let n = source.len();
            match attention.get(t) {
                Some(row) if tok == UNK && n > 0 => {
                    let mut best = 0;
                    for i in 1..n.min(row.len()) {
                        if row[i] > row[best] {
                            best = i;
                        }
                    }
                    let src = source[best].as_ref();
                    dictionary.and_then(|d| d.get(src)).cloned().unwrap_or_else(|| src.to_string())
                }
                _ => tok.clone(),
            }
        })
        .collect()
}

/// Reads `source<TAB>target` lines; the first entry for a source word wins.
pub fn load_dictionary(path: &Path) -> Result<HashMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = HashMap::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (s, t) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(format!("{}:{}", path.display(), k + 1), "expected source<TAB>target"))?;
        out.entry(s.to_string()).or_insert_with(|| t.to_string());
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
