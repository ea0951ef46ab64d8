use super::*;
use crate::corpus::Smoothing;
use crate::model::testutil::{random_model, sentence, DIMS};
use crate::model::{HeadMode, Model};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Next-word distributions drawn from a seeded RNG keyed on the prefix.
struct TableScorer {
    vocab: usize,
    seed: u64,
    sharpness: f64,
}

impl TableScorer {
    fn dist(&self, prefix: &[usize]) -> StepOutput {
        let key = prefix.iter().fold(self.seed, |acc, &w| acc.wrapping_mul(1_000_003).wrapping_add(w as u64 + 1));
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        let raw: Vec<f64> = (0..self.vocab).map(|_| (self.sharpness * rng.random_range(0.0..1.0f64)).exp()).collect();
        let z: f64 = raw.iter().sum();
        StepOutput { probs: raw.iter().map(|v| v / z).collect(), attention: vec![0.5, 0.5] }
    }
}

impl StepScorer for TableScorer {
    type State = Vec<usize>;

    fn start(&mut self) -> Result<(Vec<usize>, StepOutput)> {
        Ok((vec![], self.dist(&[])))
    }

    fn step(&mut self, state: &Vec<usize>, word: usize) -> Result<(Vec<usize>, StepOutput)> {
        let mut s = state.clone();
        s.push(word);
        let d = self.dist(&s);
        Ok((s, d))
    }
}

#[test]
fn worked_length_score_example() {
    let counts = [(5, 2), (5, 2), (5, 3), (5, 3), (5, 3), (5, 3), (5, 3), (5, 4), (5, 4), (5, 4)];
    let stats = LengthStats::from_lengths(counts, Smoothing::None).unwrap();
    let a = sequence_score(-1.0, 2, 5, Some(&stats));
    let b = sequence_score(-1.2, 3, 5, Some(&stats));
    assert!((a - (-1.305)).abs() < 1e-3, "{a}");
    assert!((b - (-0.631)).abs() < 1e-3, "{b}");
    assert!(b > a);
    assert_eq!(sequence_score(-0.5, 0, 5, Some(&stats)), f64::NEG_INFINITY);
}

#[test]
fn uniform_length_prior_preserves_ranking_within_a_length() {
    let flat = LengthStats::from_lengths([(3, 1), (3, 2), (3, 3)], Smoothing::None).unwrap().with_support_max(3);
    let lps = [-2.0, -0.7, -3.1, -1.4];
    for len in 1..=3 {
        let with: Vec<f64> = lps.iter().map(|&l| sequence_score(l, len, 3, Some(&flat))).collect();
        let without: Vec<f64> = lps.iter().map(|&l| sequence_score(l, len, 3, None)).collect();
        let shift = with[0] - without[0];
        for (a, b) in with.iter().zip(&without) {
            assert!((a - b - shift).abs() < 1e-12);
        }
    }
}

#[test]
fn beam_of_one_is_greedy() {
    for seed in 0..50 {
        let mut s = TableScorer { vocab: 6, seed, sharpness: 3.0 };
        let g = greedy(&mut s, 8).unwrap();
        let b = beam_search(&mut s, 1, 8, 4, None).unwrap();
        assert_eq!(g.tokens, b.tokens, "seed {seed}");
        assert_eq!(g.log_prob, b.log_prob);
        assert_eq!(g.finished, b.finished);
    }
}

#[test]
fn truncation_is_flagged() {
    // Without EOS ever winning, greedy runs to the limit.
    struct NoEos;
    impl StepScorer for NoEos {
        type State = ();
        fn start(&mut self) -> Result<((), StepOutput)> {
            Ok(((), StepOutput { probs: vec![0.1, 0.1, 0.8], attention: vec![1.0] }))
        }
        fn step(&mut self, _: &(), _: usize) -> Result<((), StepOutput)> {
            self.start()
        }
    }
    let g = greedy(&mut NoEos, 3).unwrap();
    assert_eq!(g.tokens, vec![2, 2, 2]);
    assert!(!g.finished);
    let b = beam_search(&mut NoEos, 1, 3, 1, None).unwrap();
    assert_eq!(b.tokens, g.tokens);
    assert!(!b.finished);
    assert_eq!(greedy(&mut NoEos, 3).unwrap(), g);
}

fn exhaustive_best(s: &TableScorer, max_len: usize, src: usize, stats: Option<&LengthStats>) -> (Vec<usize>, f64) {
    let words: Vec<usize> = (0..s.vocab).filter(|&w| w != EOS_ID).collect();
    let mut prefixes: Vec<Vec<usize>> = vec![vec![]];
    let mut best = (vec![], f64::NEG_INFINITY);
    for _ in 0..max_len {
        let mut grown = vec![];
        for p in &prefixes {
            let mut lp = 0.0;
            for k in 0..p.len() {
                lp += s.dist(&p[..k]).probs[p[k]].ln();
            }
            let total = lp + s.dist(p).probs[EOS_ID].ln();
            let score = sequence_score(total, p.len(), src, stats);
            if score > best.1 {
                best = (p.clone(), score);
            }
            for &w in &words {
                let mut q = p.clone();
                q.push(w);
                grown.push(q);
            }
        }
        prefixes = grown;
    }
    best
}

#[test]
fn exhaustive_beam_recovers_global_optimum() {
    let stats = LengthStats::from_lengths([(2, 1), (2, 2), (2, 2), (2, 3)], Smoothing::AddOne).unwrap();
    for vocab in 2..=3 {
        for max_len in 1..=3 {
            for seed in 0..40 {
                let mut s = TableScorer { vocab, seed, sharpness: 2.0 };
                for st in [None, Some(&stats)] {
                    let want = exhaustive_best(&s, max_len, 2, st);
                    let beam = vocab.pow(max_len as u32);
                    let got = beam_search(&mut s, beam, max_len, 2, st).unwrap();
                    if want.1.is_finite() {
                        assert!(got.finished);
                        assert_eq!(got.tokens, want.0, "V={vocab} L={max_len} seed={seed}");
                        assert!((got.score - want.1).abs() < 1e-12);
                    }
                }
            }
        }
    }
}

#[test]
fn wider_beams_never_score_below_greedy() {
    let stats = LengthStats::from_lengths((1..8).flat_map(|l| [(5, l), (5, l.min(5))]), Smoothing::AddOne).unwrap();
    for seed in 0..200 {
        let mut s = TableScorer { vocab: 5, seed, sharpness: 2.5 };
        let g = greedy(&mut s, 10).unwrap();
        if !g.finished {
            continue;
        }
        let gs = sequence_score(g.log_prob, g.tokens.len(), 5, Some(&stats));
        for b in [1, 2, 4, 8] {
            let t = beam_search(&mut s, b, 10, 5, Some(&stats)).unwrap();
            assert!(t.score >= gs - 1e-12, "seed {seed} beam {b}: {} < {gs}", t.score);
        }
    }
}

#[test]
fn unknown_replacement() {
    let src = ["the", "xylem", "grows"];
    let toks = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let att = vec![vec![0.1, 0.8, 0.05, 0.05], vec![0.1, 0.1, 0.1, 0.7]];
    assert_eq!(replace_unknowns(&toks(&["a", "b"]), &att, &src, None), toks(&["a", "b"]));
    assert_eq!(replace_unknowns(&toks(&[UNK, "b"]), &att, &src, None), toks(&["xylem", "b"]));
    let mut dict = HashMap::new();
    dict.insert("xylem".to_string(), "X".to_string());
    assert_eq!(replace_unknowns(&toks(&[UNK, "b"]), &att, &src, Some(&dict)), toks(&["X", "b"]));
    // The EOS column is never chosen even when it dominates.
    assert_eq!(replace_unknowns(&toks(&["a", UNK]), &att, &src, None), toks(&["a", "the"]));
}

#[test]
fn dictionary_first_entry_wins() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("d.tsv");
    std::fs::write(&p, "a\tA\nb\tB\na\tZ\n").unwrap();
    let d = load_dictionary(&p).unwrap();
    assert_eq!(d["a"], "A");
    assert_eq!(d.len(), 2);
    std::fs::write(&p, "no tab\n").unwrap();
    assert!(load_dictionary(&p).is_err());
}

fn toy_model(seed: u64) -> Model<f64> {
    let (params, net) = random_model(HeadMode::Learned, DIMS, seed, 0.5);
    Model { net, params, source_hash: 1, target_hash: 2 }
}

#[test]
fn ensemble_of_identical_models_matches_single_model() {
    let m = toy_model(1);
    let s = sentence(&[2, 3, 4], DIMS.ngram_vocab);
    let mut single = ModelSession::new(&m, &s, None).unwrap();
    let mut ens = Ensemble::new(&[&m, &m, &m], &s, None).unwrap();
    let (mut st1, mut o1) = single.start().unwrap();
    let (mut st2, mut o2) = ens.start().unwrap();
    for w in [3, 2, 5] {
        for (a, b) in o1.probs.iter().zip(&o2.probs) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!((o2.probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        (st1, o1) = single.step(&st1, w).unwrap();
        (st2, o2) = ens.step(&st2, w).unwrap();
    }
}

#[test]
fn ensemble_averages_distributions() {
    let (a, b) = (toy_model(1), toy_model(2));
    let s = sentence(&[2, 3], DIMS.ngram_vocab);
    let (_, p) = ModelSession::new(&a, &s, None).unwrap().start().unwrap();
    let (_, q) = ModelSession::new(&b, &s, None).unwrap().start().unwrap();
    let (_, e) = Ensemble::new(&[&a, &b], &s, None).unwrap().start().unwrap();
    for k in 0..p.probs.len() {
        assert_eq!(e.probs[k], (p.probs[k] + q.probs[k]) / 2.0);
    }
    let mut c = toy_model(3);
    c.target_hash = 99;
    assert!(matches!(Ensemble::new(&[&a, &c], &s, None), Err(Error::VocabMismatch(_))));
}

#[test]
fn model_greedy_is_deterministic_and_matches_beam_one() {
    let m = toy_model(4);
    let s = sentence(&[2, 5, 3], DIMS.ngram_vocab);
    let a = greedy(&mut ModelSession::new(&m, &s, None).unwrap(), 12).unwrap();
    let b = greedy(&mut ModelSession::new(&m, &s, None).unwrap(), 12).unwrap();
    assert_eq!(a, b);
    let c = beam_search(&mut ModelSession::new(&m, &s, None).unwrap(), 1, 12, 3, None).unwrap();
    assert_eq!(a.tokens, c.tokens);
    assert_eq!(a.attention, c.attention);
}
