//! BlackOut: a weighted sampled softmax whose negatives are drawn once per minibatch.

use rand::seq::index::sample_weighted;
use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{ParamId, Real, Tape, Var};

/// Proposal distribution `q ∝ count^α` over the target vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSampler {
    q: Vec<f64>,
    log_q: Vec<f64>,
}

/// Negatives shared by every target position of a minibatch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NoiseSet {
    pub ids: Vec<usize>,
    /// Extra draws used to replace a negative that coincides with the target.
    pub spares: Vec<usize>,
}

impl NoiseSampler {
    /// Zero counts are raised to 1 so every word keeps a finite `ln q`.
    pub fn from_counts(counts: &[u64], alpha: f64) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!("blackout alpha must be positive, got {alpha}")));
        }
        let w: Vec<f64> = counts.iter().map(|&c| (c.max(1) as f64).powf(alpha)).collect();
        let total: f64 = w.iter().sum();
        let q: Vec<f64> = w.iter().map(|v| v / total).collect();
        let log_q = q.iter().map(|v| v.ln()).collect();
        Ok(NoiseSampler { q, log_q })
    }

    pub fn uniform(vocab: usize) -> Result<Self> {
        Self::from_counts(&vec![1; vocab], 1.0)
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn log_q(&self) -> &[f64] {
        &self.log_q
    }

    /// Draws `k` distinct negatives (plus a few spares) without replacement.
    pub fn draw<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Result<NoiseSet> {
        let v = self.q.len();
        let spare = 8.min(v.saturating_sub(k));
        let amount = (k + spare).min(v);
        let picked = sample_weighted(rng, v, |i| self.q[i], amount)
            .map_err(|e| Error::Invalid(format!("noise sampling failed: {e}")))?
            .into_vec();
        let split = k.min(picked.len());
        Ok(NoiseSet { ids: picked[..split].to_vec(), spares: picked[split..].to_vec() })
    }
}

impl NoiseSet {
    pub fn new(ids: Vec<usize>) -> Self {
        NoiseSet { ids, spares: vec![] }
    }

    /// The shared negatives with `target` swapped for a spare draw if it was sampled.
    pub fn negatives_for(&self, target: usize) -> Vec<usize> {
        let mut out = self.ids.clone();
        if let Some(pos) = out.iter().position(|&i| i == target) {
            match self.spares.iter().find(|s| **s != target && !self.ids.contains(s)) {
                Some(&s) => out[pos] = s,
                None => {
                    out.remove(pos);
                }
            }
        }
        out
    }
}

/// `−ln p̃(target) − Σ_{j∈S} ln(1 − p̃(j))` with `p̃(k) ∝ exp(s_k) / q_k` over `{target} ∪ S`.
pub fn blackout_loss<T: Real>(
    tape: &mut Tape<'_, T>,
    emb: ParamId,
    bias: ParamId,
    h_tilde: Var,
    target: usize,
    noise: &[usize],
    log_q: &[f64],
) -> Result<Var> {
    if noise.contains(&target) {
        return Err(Error::Invalid(format!("target {target} is in its own noise set")));
    }
    let mut rows = Vec::with_capacity(noise.len() + 1);
    rows.push(target);
    rows.extend_from_slice(noise);
    let shift: Vec<T> = rows.iter().map(|&r| T::of(-log_q[r])).collect();
    let w = tape.param(emb);
    let b = tape.param(bias);
    let s = tape.matvec_rows(w, &rows, h_tilde);
    let b = tape.gather(b, &rows);
    let s = tape.add(s, b);
    let z = tape.add_const(s, &shift);
    let lp = tape.log_softmax(z, None)?;
    let mut terms = vec![tape.pick(lp, 0)];
    if !noise.is_empty() {
        let neg_idx: Vec<usize> = (1..rows.len()).collect();
        let neg = tape.gather(lp, &neg_idx);
        let l = tape.log1m_exp(neg);
        terms.push(tape.sum(l));
    }
    let total = tape.add_all(&terms);
    Ok(tape.scale(total, -T::one()))
}
