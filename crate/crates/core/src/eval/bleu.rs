use std::collections::HashMap;

use crate::error::{Error, Result};

/// Corpus BLEU with its components.
#[derive(Clone, Debug, PartialEq)]
pub struct Bleu {
    /// In `[0, 100]`.
    pub score: f64,
    pub brevity_penalty: f64,
    pub precisions: Vec<f64>,
    pub hyp_len: usize,
    pub ref_len: usize,
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut out = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *out.entry(w.iter().map(|s| s.as_ref()).collect()).or_insert(0) += 1;
        }
    }
    out
}

/// Corpus-level BLEU over n-gram orders `1..=max_n`.
///
/// Orders with no n-grams in either hypotheses or references are left out of
/// the geometric mean. With `smooth`, orders above 1 use add-one precision so tiny corpora without
/// long matches still score above zero.
pub fn bleu<H, R, S, U>(hypotheses: &[H], references: &[R], max_n: usize, smooth: bool) -> Result<Bleu>
where
    H: AsRef<[S]>,
    R: AsRef<[U]>,
    S: AsRef<str>,
    U: AsRef<str>,
{
    if hypotheses.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if hypotheses.len() != references.len() {
        return Err(Error::Invalid(format!(
            "{} hypotheses for {} references",
            hypotheses.len(),
            references.len()
        )));
    }
    let mut matched = vec![0usize; max_n];
    let mut total = vec![0usize; max_n];
    let mut ref_total = vec![0usize; max_n];
    let (mut hyp_len, mut ref_len) = (0, 0);
    for (h, r) in hypotheses.iter().zip(references) {
        let (h, r) = (h.as_ref(), r.as_ref());
        hyp_len += h.len();
        ref_len += r.len();
        for n in 1..=max_n {
            let hc = ngram_counts(h, n);
            let rc = ngram_counts(r, n);
            ref_total[n - 1] += rc.values().sum::<usize>();
            for (g, &c) in &hc {
                matched[n - 1] += c.min(rc.get(g).copied().unwrap_or(0));
                total[n - 1] += c;
            }
        }
    }
    // Orders longer than every sentence on both sides carry no information.
    let orders: Vec<usize> = (0..max_n).filter(|&k| total[k] + ref_total[k] > 0).collect();
    let precisions: Vec<f64> = orders
        .iter()
        .map(|&k| {
            if smooth && k > 0 {
                (matched[k] + 1) as f64 / (total[k] + 1) as f64
            } else if total[k] == 0 {
                0.0
            } else {
                matched[k] as f64 / total[k] as f64
            }
        })
        .collect();
    let brevity_penalty = if hyp_len == 0 {
        0.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp().min(1.0)
    };
    let score = if precisions.is_empty() || precisions.contains(&0.0) {
        0.0
    } else {
        let mean_log = precisions.iter().map(|p| p.ln()).sum::<f64>() / precisions.len() as f64;
        100.0 * brevity_penalty * mean_log.exp()
    };
    Ok(Bleu { score, brevity_penalty, precisions, hyp_len, ref_len })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn identical_corpus_scores_100() {
        let c = vec![toks("a b c d e"), toks("the cat sat on the mat")];
        let b = bleu(&c, &c, 4, false).unwrap();
        assert_eq!(b.score, 100.0);
        assert_eq!(b.brevity_penalty, 1.0);
    }

    #[test]
    fn truncated_hypothesis_matches_hand_evaluation() {
        let r = toks("a b c d e f g h i j");
        let h = toks("a b c d e f g h i");
        let b = bleu(&[h], &[r], 4, false).unwrap();
        // Every n-gram of the 9-token prefix matches: precisions are all 1.
        let bp = (1.0f64 - 10.0 / 9.0).exp();
        assert!((b.brevity_penalty - bp).abs() < 1e-15);
        assert!((b.score - 100.0 * bp).abs() < 1e-12);
        assert!((b.score - 89.483_931_681_436_97).abs() < 1e-9);
    }

    #[test]
    fn clipped_counts_and_geometric_mean() {
        // hyp "the the the cat", ref "the cat sat": p1 = (1+1)/4, p2 = 1/3 ("the cat").
        let b = bleu(&[toks("the the the cat")], &[toks("the cat sat")], 2, false).unwrap();
        assert_eq!(b.precisions, vec![0.5, 1.0 / 3.0]);
        assert!((b.score - 100.0 * (0.5f64 * (1.0 / 3.0)).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn no_four_gram_match_is_zero_unless_smoothed() {
        let b = bleu(&[toks("a b c x d")], &[toks("a b c y d")], 4, false).unwrap();
        assert_eq!(b.score, 0.0);
        assert_eq!(bleu(&[toks("a b")], &[toks("a b")], 4, false).unwrap().score, 100.0);
        assert!(bleu(&[toks("a b c x d")], &[toks("a b c y d")], 4, true).unwrap().score > 0.0);
    }

    #[test]
    fn empty_corpus_is_error() {
        let none: Vec<Vec<String>> = vec![];
        assert!(bleu(&none, &none, 4, false).is_err());
    }

    proptest! {
        #[test]
        fn permutation_invariant(corpus in prop::collection::vec((prop::collection::vec(0u8..4, 0..8), prop::collection::vec(0u8..4, 1..8)), 1..6), rot in 0usize..6) {
            let hyps: Vec<Vec<String>> = corpus.iter().map(|(h, _)| h.iter().map(|x| x.to_string()).collect()).collect();
            let refs: Vec<Vec<String>> = corpus.iter().map(|(_, r)| r.iter().map(|x| x.to_string()).collect()).collect();
            let a = bleu(&hyps, &refs, 4, false).unwrap();
            let k = rot % hyps.len();
            let (mut h2, mut r2) = (hyps.clone(), refs.clone());
            h2.rotate_left(k);
            r2.rotate_left(k);
            let b = bleu(&h2, &r2, 4, false).unwrap();
            prop_assert_eq!(a.score, b.score);
            prop_assert_eq!(a.score == 100.0, hyps == refs);
        }
    }
}
