//! The latent graph parser: a two-layer bi-directional LSTM whose first layer
//! tags parts of speech and whose second layer scores soft head attachments.

use crate::corpus::SourceSentence;
use crate::error::{Error, Result};
use crate::tensor::{lstm_step, LstmParams, ParamId, ParamSet, Real, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParserDims {
    /// Word / n-gram embedding size and LSTM hidden size per direction.
    pub d1: usize,
    /// Size of the projected POS vector fed to the second layer.
    pub d2: usize,
    pub num_pos: usize,
    pub num_labels: usize,
    pub vocab: usize,
    pub ngram_vocab: usize,
}

/// Handles to the `parser.*` tensors of a parameter set.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentParser {
    pub dims: ParserDims,
    pub word_emb: ParamId,
    pub ngram_emb: ParamId,
    pub lstm1_fwd: LstmParams,
    pub lstm1_bwd: LstmParams,
    pub pos_w: ParamId,
    pub pos_b: ParamId,
    pub pos_proj: ParamId,
    pub lstm2_fwd: LstmParams,
    pub lstm2_bwd: LstmParams,
    pub head_w: ParamId,
    pub label_w: ParamId,
    pub label_b: ParamId,
}

/// Gold annotation as ids; `heads` are 1-based with 0 for ROOT.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GoldParse {
    pub pos: Vec<usize>,
    pub heads: Vec<usize>,
    pub labels: Vec<usize>,
}

/// Output of the POS layer over all `N + 1` positions.
#[derive(Clone, Debug)]
pub struct PosLayer {
    pub fwd: Vec<Var>,
    pub bwd: Vec<Var>,
    pub states: Vec<Var>,
    pub logits: Vec<Var>,
    pub probs: Vec<Var>,
}

#[derive(Clone, Debug)]
pub struct ParserStates {
    pub inputs: Vec<Var>,
    pub pos: PosLayer,
    /// Second-layer states `h2`, one per position including `EOS`.
    pub h2: Vec<Var>,
    /// `h2` stacked as an `(N+1) × 2d1` matrix.
    pub h2_matrix: Var,
}

/// Soft dependency structure of one sentence, as plain numbers.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentGraph {
    /// `N` rows over `N + 1` candidates (the last is `EOS`/ROOT); diagonal is 0.
    pub head_probs: Vec<Vec<f64>>,
    /// `N` rows over the label inventory.
    pub label_probs: Vec<Vec<f64>>,
    /// Second-layer parser states for the `N` words.
    pub h2: Vec<Vec<f64>>,
}

impl LatentGraph {
    pub fn len(&self) -> usize {
        self.head_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.head_probs.is_empty()
    }
}

/// Mask of head candidates for word `i` (0-based) in a sentence of `n` words.
pub(crate) fn candidate_mask(n: usize, i: usize) -> Vec<bool> {
    (0..=n).map(|k| k != i).collect()
}

/// Column of a 1-based gold head: ROOT maps onto the `EOS` column.
pub(crate) fn head_column(head: usize, n: usize) -> usize {
    if head == 0 {
        n
    } else {
        head - 1
    }
}

impl LatentParser {
    pub fn register<T: Real>(ps: &mut ParamSet<T>, dims: ParserDims) -> Self {
        let ParserDims { d1, d2, num_pos, num_labels, vocab, ngram_vocab } = dims;
        let word_emb = ps.insert("parser.word_emb", Tensor::zeros(&[vocab, d1]));
        let ngram_emb = ps.insert("parser.ngram_emb", Tensor::zeros(&[ngram_vocab, d1]));
        let lstm1_fwd = LstmParams::register(ps, "parser.lstm1.fwd", 2 * d1, d1);
        let lstm1_bwd = LstmParams::register(ps, "parser.lstm1.bwd", 2 * d1, d1);
        let pos_w = ps.insert("parser.pos.w", Tensor::zeros(&[num_pos, 2 * d1]));
        let pos_b = ps.insert("parser.pos.b", Tensor::zeros(&[num_pos]));
        let pos_proj = ps.insert("parser.pos_proj.w", Tensor::zeros(&[d2, num_pos]));
        let lstm2_fwd = LstmParams::register(ps, "parser.lstm2.fwd", 3 * d1 + d2, d1);
        let lstm2_bwd = LstmParams::register(ps, "parser.lstm2.bwd", 3 * d1 + d2, d1);
        let head_w = ps.insert("parser.head.w", Tensor::zeros(&[2 * d1, 2 * d1]));
        let label_w = ps.insert("parser.label.w", Tensor::zeros(&[num_labels, 4 * d1]));
        let label_b = ps.insert("parser.label.b", Tensor::zeros(&[num_labels]));
        LatentParser {
            dims,
            word_emb,
            ngram_emb,
            lstm1_fwd,
            lstm1_bwd,
            pos_w,
            pos_b,
            pos_proj,
            lstm2_fwd,
            lstm2_bwd,
            head_w,
            label_w,
            label_b,
        }
    }

    /// Binds to existing `parser.*` tensors, inferring dimensions from shapes.
    pub fn bind<T: Real>(ps: &ParamSet<T>) -> Result<Self> {
        let word_emb = ps.require("parser.word_emb")?;
        let ngram_emb = ps.require("parser.ngram_emb")?;
        let pos_w = ps.require("parser.pos.w")?;
        let pos_proj = ps.require("parser.pos_proj.w")?;
        let label_w = ps.require("parser.label.w")?;
        let dims = ParserDims {
            d1: ps.get(word_emb).cols(),
            d2: ps.get(pos_proj).rows(),
            num_pos: ps.get(pos_w).rows(),
            num_labels: ps.get(label_w).rows(),
            vocab: ps.get(word_emb).rows(),
            ngram_vocab: ps.get(ngram_emb).rows(),
        };
        let bound = LatentParser {
            dims,
            word_emb,
            ngram_emb,
            lstm1_fwd: LstmParams::lookup(ps, "parser.lstm1.fwd")?,
            lstm1_bwd: LstmParams::lookup(ps, "parser.lstm1.bwd")?,
            pos_w,
            pos_b: ps.require("parser.pos.b")?,
            pos_proj,
            lstm2_fwd: LstmParams::lookup(ps, "parser.lstm2.fwd")?,
            lstm2_bwd: LstmParams::lookup(ps, "parser.lstm2.bwd")?,
            head_w: ps.require("parser.head.w")?,
            label_w,
            label_b: ps.require("parser.label.b")?,
        };
        let mut fresh = ParamSet::<T>::new();
        LatentParser::register(&mut fresh, dims);
        for (name, t) in fresh.iter() {
            let got = ps.by_name(name).map(|x| x.dims().to_vec());
            if got.as_deref() != Some(t.dims()) {
                return Err(Error::Checkpoint(format!("{name}: expected shape {:?}, found {got:?}", t.dims())));
            }
        }
        Ok(bound)
    }

    /// Names of the embedding tables (frozen during supervised pre-training).
    pub fn embedding_names() -> [&'static str; 2] {
        ["parser.word_emb", "parser.ngram_emb"]
    }

    /// `x(w) = [v_dp(w); mean of n-gram embeddings]`, size `2·d1`.
    pub fn embed_token<T: Real>(&self, tape: &mut Tape<'_, T>, word: usize, ngrams: &[usize]) -> Var {
        let v = tape.lookup(self.word_emb, word);
        let rows: Vec<Var> = ngrams.iter().map(|&g| tape.lookup(self.ngram_emb, g)).collect();
        let c = match rows.as_slice() {
            [only] => *only,
            _ => {
                let mut acc = rows[0];
                for &r in &rows[1..] {
                    acc = tape.add(acc, r);
                }
                tape.scale(acc, T::of(1.0 / rows.len() as f64))
            }
        };
        tape.concat(&[v, c])
    }

    fn run_lstm<T: Real>(
        tape: &mut Tape<'_, T>,
        p: &LstmParams,
        inputs: &[Var],
        reverse: bool,
    ) -> Result<Vec<Var>> {
        let mut h = tape.zeros(p.hidden);
        let mut c = tape.zeros(p.hidden);
        let mut out = vec![h; inputs.len()];
        let order: Box<dyn Iterator<Item = usize>> =
            if reverse { Box::new((0..inputs.len()).rev()) } else { Box::new(0..inputs.len()) };
        for i in order {
            (h, c) = lstm_step(tape, p, h, c, inputs[i])?;
            out[i] = h;
        }
        Ok(out)
    }

    /// First layer: bi-directional LSTM and POS softmax over every position.
    pub fn tag_pos<T: Real>(&self, tape: &mut Tape<'_, T>, inputs: &[Var]) -> Result<PosLayer> {
        if inputs.is_empty() {
            return Err(Error::Invalid("tag_pos on an empty sequence".into()));
        }
        let fwd = Self::run_lstm(tape, &self.lstm1_fwd, inputs, false)?;
        let bwd = Self::run_lstm(tape, &self.lstm1_bwd, inputs, true)?;
        let w = tape.param(self.pos_w);
        let b = tape.param(self.pos_b);
        let mut states = Vec::with_capacity(inputs.len());
        let mut logits = Vec::with_capacity(inputs.len());
        let mut probs = Vec::with_capacity(inputs.len());
        for i in 0..inputs.len() {
            let h = tape.concat(&[fwd[i], bwd[i]]);
            let z = tape.matvec(w, h);
            let z = tape.add(z, b);
            probs.push(tape.softmax(z, None)?);
            logits.push(z);
            states.push(h);
        }
        Ok(PosLayer { fwd, bwd, states, logits, probs })
    }

    /// Runs both layers over `sentence` (including its `EOS` position).
    pub fn run<T: Real>(&self, tape: &mut Tape<'_, T>, sentence: &SourceSentence) -> Result<ParserStates> {
        let inputs: Vec<Var> = sentence
            .words
            .iter()
            .zip(&sentence.ngrams)
            .map(|(&w, g)| self.embed_token(tape, w, g))
            .collect();
        let pos = self.tag_pos(tape, &inputs)?;
        let proj = tape.param(self.pos_proj);
        let ys: Vec<Var> = pos.probs.iter().map(|&p| tape.matvec(proj, p)).collect();
        let fwd_in: Vec<Var> = (0..inputs.len()).map(|i| tape.concat(&[inputs[i], ys[i], pos.fwd[i]])).collect();
        let bwd_in: Vec<Var> = (0..inputs.len()).map(|i| tape.concat(&[inputs[i], ys[i], pos.bwd[i]])).collect();
        let f2 = Self::run_lstm(tape, &self.lstm2_fwd, &fwd_in, false)?;
        let b2 = Self::run_lstm(tape, &self.lstm2_bwd, &bwd_in, true)?;
        let h2: Vec<Var> = (0..inputs.len()).map(|i| tape.concat(&[f2[i], b2[i]])).collect();
        let h2_matrix = tape.stack(&h2);
        Ok(ParserStates { inputs, pos, h2, h2_matrix })
    }

    /// Bilinear head scores `m(i, k) = h2_kᵀ W_dp h2_i` for word `i` (0-based).
    fn head_scores<T: Real>(&self, tape: &mut Tape<'_, T>, states: &ParserStates, i: usize) -> Var {
        let w = tape.param(self.head_w);
        let u = tape.matvec(w, states.h2[i]);
        tape.matvec(states.h2_matrix, u)
    }

    /// Head distributions for words `1..=N`, each over the `N + 1` candidates.
    pub fn select_heads<T: Real>(&self, tape: &mut Tape<'_, T>, states: &ParserStates) -> Result<Vec<Var>> {
        let n = states.h2.len() - 1;
        if n == 0 {
            return Err(Error::Invalid("head selection needs at least one word".into()));
        }
        (0..n)
            .map(|i| {
                let s = self.head_scores(tape, states, i);
                tape.softmax(s, Some(&candidate_mask(n, i)))
            })
            .collect()
    }

    fn label_logits<T: Real>(&self, tape: &mut Tape<'_, T>, h2_i: Var, z: Var) -> Var {
        let w = tape.param(self.label_w);
        let b = tape.param(self.label_b);
        let input = tape.concat(&[h2_i, z]);
        let l = tape.matvec(w, input);
        tape.add(l, b)
    }

    /// Label distributions from `[h2_i; z_i]` with `z_i = Σ_j p(H=j|i) h2_j`.
    pub fn predict_labels<T: Real>(
        &self,
        tape: &mut Tape<'_, T>,
        states: &ParserStates,
        heads: &[Var],
    ) -> Result<Vec<Var>> {
        heads
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let z = tape.matvec_t(states.h2_matrix, p);
                let l = self.label_logits(tape, states.h2[i], z);
                tape.softmax(l, None)
            })
            .collect()
    }

    /// Sum of POS, head and label cross-entropies for one sentence.
    ///
    /// The label classifier sees the gold head's state rather than the soft
    /// average.
    pub fn loss<T: Real>(&self, tape: &mut Tape<'_, T>, sentence: &SourceSentence, gold: &GoldParse) -> Result<Var> {
        let n = sentence.len();
        if gold.pos.len() != n || gold.heads.len() != n || gold.labels.len() != n {
            return Err(Error::Invalid(format!("gold annotation does not cover {n} words")));
        }
        if let Some(&l) = gold.labels.iter().find(|&&l| l >= self.dims.num_labels) {
            return Err(Error::Invalid(format!("gold label id {l} outside {} labels", self.dims.num_labels)));
        }
        if let Some(&t) = gold.pos.iter().find(|&&t| t >= self.dims.num_pos) {
            return Err(Error::Invalid(format!("gold POS id {t} outside {} tags", self.dims.num_pos)));
        }
        if gold.heads.iter().enumerate().any(|(i, &h)| h > n || h == i + 1) {
            return Err(Error::Invalid("gold head out of range".into()));
        }
        let states = self.run(tape, sentence)?;
        let mut terms = Vec::with_capacity(3 * n);
        for i in 0..n {
            terms.push(tape.cross_entropy(states.pos.logits[i], gold.pos[i], None)?);
            let col = head_column(gold.heads[i], n);
            let s = self.head_scores(tape, &states, i);
            terms.push(tape.cross_entropy(s, col, Some(&candidate_mask(n, i)))?);
            let l = self.label_logits(tape, states.h2[i], states.h2[col]);
            terms.push(tape.cross_entropy(l, gold.labels[i], None)?);
        }
        Ok(tape.add_all(&terms))
    }

    /// Latent graph for `sentence` with learned heads and labels.
    pub fn graph<T: Real>(&self, tape: &mut Tape<'_, T>, sentence: &SourceSentence) -> Result<LatentGraph> {
        let states = self.run(tape, sentence)?;
        let heads = self.select_heads(tape, &states)?;
        let labels = self.predict_labels(tape, &states, &heads)?;
        Ok(read_graph(tape, &heads, &labels, &states.h2[..sentence.len()]))
    }
}

pub(crate) fn read_graph<T: Real>(tape: &Tape<'_, T>, heads: &[Var], labels: &[Var], h2: &[Var]) -> LatentGraph {
    let rows = |vs: &[Var]| -> Vec<Vec<f64>> {
        vs.iter().map(|&v| tape.value(v).iter().map(|x| x.f64()).collect()).collect()
    };
    LatentGraph { head_probs: rows(heads), label_probs: rows(labels), h2: rows(h2) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{finite_diff_check, GradCheckOptions};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) const DIMS: ParserDims = ParserDims { d1: 3, d2: 2, num_pos: 4, num_labels: 3, vocab: 7, ngram_vocab: 6 };

    fn randomized(dims: ParserDims, seed: u64) -> (ParamSet<f64>, LatentParser) {
        let mut ps = ParamSet::new();
        let p = LatentParser::register(&mut ps, dims);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ids: Vec<_> = ps.ids().collect();
        for id in ids {
            for v in ps.get_mut(id).data_mut() {
                *v = rng.random_range(-0.6..0.6);
            }
        }
        (ps, p)
    }

    fn sentence(words: &[usize]) -> SourceSentence {
        let mut w = words.to_vec();
        w.push(crate::corpus::EOS_ID);
        let ngrams = w.iter().map(|&x| if x % 2 == 0 { vec![x % 6] } else { vec![x % 6, (x + 1) % 6] }).collect();
        SourceSentence { tokens: words.iter().map(|x| x.to_string()).collect(), words: w, ngrams }
    }

    #[test]
    fn embedding_has_two_d1_dims_and_averages_ngrams() {
        let (ps, p) = randomized(DIMS, 1);
        let mut tape = Tape::new(&ps);
        let v = p.embed_token(&mut tape, 3, &[2]);
        let x = tape.value(v).to_vec();
        assert_eq!(x.len(), 2 * DIMS.d1);
        assert_eq!(&x[3..], ps.get(p.ngram_emb).row(2));

        let v = p.embed_token(&mut tape, 3, &[1, 4]);
        let x = tape.value(v).to_vec();
        let (e1, e2) = (ps.get(p.ngram_emb).row(1), ps.get(p.ngram_emb).row(4));
        for k in 0..3 {
            assert!((x[3 + k] - (e1[k] + e2[k]) / 2.0).abs() < 1e-15);
        }

        let mut big = ParamSet::<f32>::new();
        let pb = LatentParser::register(&mut big, ParserDims { d1: 100, d2: 50, ..DIMS });
        let mut tape = Tape::new(&big);
        let v = pb.embed_token(&mut tape, 0, &[0]);
        assert_eq!(tape.value(v).len(), 200);
    }

    #[test]
    fn pos_distributions_normalise_and_zero_weights_are_uniform() {
        let (mut ps, p) = randomized(DIMS, 2);
        let s = sentence(&[2, 3, 4]);
        let mut tape = Tape::new(&ps);
        let st = p.run(&mut tape, &s).unwrap();
        for &pr in &st.pos.probs {
            assert!((tape.value(pr).iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
        drop(tape);
        ps.get_mut(p.pos_w).data_mut().fill(0.0);
        ps.get_mut(p.pos_b).data_mut().fill(0.0);
        let mut tape = Tape::new(&ps);
        let st = p.run(&mut tape, &s).unwrap();
        for &pr in &st.pos.probs {
            assert!(tape.value(pr).iter().all(|&v| v == 0.25));
        }
    }

    #[test]
    fn reversed_sentence_with_swapped_directions_mirrors_states() {
        let (ps, p) = randomized(DIMS, 3);
        let mut swapped = ps.clone();
        for suffix in ["w", "b"] {
            let f = ps.by_name(&format!("parser.lstm1.fwd.{suffix}")).unwrap().clone();
            let b = ps.by_name(&format!("parser.lstm1.bwd.{suffix}")).unwrap().clone();
            *swapped.by_name_mut(&format!("parser.lstm1.fwd.{suffix}")).unwrap() = b;
            *swapped.by_name_mut(&format!("parser.lstm1.bwd.{suffix}")).unwrap() = f;
        }
        let s = sentence(&[2, 5, 3, 6]);
        let mut tape = Tape::new(&ps);
        let xs: Vec<Var> = s.words.iter().zip(&s.ngrams).map(|(&w, g)| p.embed_token(&mut tape, w, g)).collect();
        let a = p.tag_pos(&mut tape, &xs).unwrap();

        let mut tape2 = Tape::new(&swapped);
        let mut xs2: Vec<Var> =
            s.words.iter().zip(&s.ngrams).map(|(&w, g)| p.embed_token(&mut tape2, w, g)).collect();
        xs2.reverse();
        let b = p.tag_pos(&mut tape2, &xs2).unwrap();
        let last = xs.len() - 1;
        for i in 0..xs.len() {
            assert_eq!(tape.value(a.fwd[i]), tape2.value(b.bwd[last - i]));
            assert_eq!(tape.value(a.bwd[i]), tape2.value(b.fwd[last - i]));
        }
    }

    #[test]
    fn single_word_attaches_to_eos() {
        let (ps, p) = randomized(DIMS, 4);
        let mut tape = Tape::new(&ps);
        let st = p.run(&mut tape, &sentence(&[3])).unwrap();
        let h = p.select_heads(&mut tape, &st).unwrap();
        assert_eq!(tape.value(h[0]), &[0.0, 1.0]);
    }

    #[test]
    fn empty_sentence_has_no_heads() {
        let (ps, p) = randomized(DIMS, 4);
        let mut tape = Tape::new(&ps);
        let st = p.run(&mut tape, &sentence(&[])).unwrap();
        assert!(p.select_heads(&mut tape, &st).is_err());
    }

    #[test]
    fn zero_bilinear_weights_give_uniform_heads() {
        let (mut ps, p) = randomized(DIMS, 5);
        ps.get_mut(p.head_w).data_mut().fill(0.0);
        let mut tape = Tape::new(&ps);
        let st = p.run(&mut tape, &sentence(&[2, 3, 4, 5])).unwrap();
        let h = p.select_heads(&mut tape, &st).unwrap();
        for (i, &row) in h.iter().enumerate() {
            for (k, &v) in tape.value(row).iter().enumerate() {
                let want = if k == i { 0.0 } else { 0.25 };
                assert!((v - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn heads_match_scalar_oracle_with_identity_weights() {
        let d1 = 2;
        let dims = ParserDims { d1, ..DIMS };
        let (mut ps, p) = randomized(dims, 6);
        let eye = ps.get_mut(p.head_w).data_mut();
        eye.fill(0.0);
        for k in 0..2 * d1 {
            eye[k * 2 * d1 + k] = 1.0;
        }
        let mut tape = Tape::new(&ps);
        let st = p.run(&mut tape, &sentence(&[2, 3])).unwrap();
        let h2: Vec<Vec<f64>> = st.h2.iter().map(|&v| tape.value(v).to_vec()).collect();
        let heads = p.select_heads(&mut tape, &st).unwrap();
        for i in 0..2 {
            let score = |k: usize| h2[k].iter().zip(&h2[i]).map(|(a, b)| a * b).sum::<f64>().exp();
            let z: f64 = (0..3).filter(|&k| k != i).map(score).sum();
            for k in 0..3 {
                let want = if k == i { 0.0 } else { score(k) / z };
                assert!((tape.value(heads[i])[k] - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn label_context_follows_head_distribution() {
        let (mut ps, p) = randomized(DIMS, 7);
        let s = sentence(&[2, 3, 4]);
        let mut tape = Tape::new(&ps);
        let st = p.run(&mut tape, &s).unwrap();
        let one_hot = tape.vector(vec![0.0, 0.0, 1.0, 0.0]);
        let z = tape.matvec_t(st.h2_matrix, one_hot);
        assert_eq!(tape.value(z), tape.value(st.h2[2]));
        let uniform = tape.vector(vec![0.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]);
        let zv = tape.matvec_t(st.h2_matrix, uniform);
        let z = tape.value(zv).to_vec();
        for k in 0..z.len() {
            let mean = (1..4).map(|j| tape.value(st.h2[j])[k]).sum::<f64>() / 3.0;
            assert!((z[k] - mean).abs() < 1e-14);
        }
        let heads = p.select_heads(&mut tape, &st).unwrap();
        for &l in &p.predict_labels(&mut tape, &st, &heads).unwrap() {
            assert!((tape.value(l).iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
        drop(tape);
        ps.get_mut(p.label_w).data_mut().fill(0.0);
        ps.get_mut(p.label_b).data_mut().fill(0.0);
        let mut tape = Tape::new(&ps);
        let st = p.run(&mut tape, &s).unwrap();
        let heads = p.select_heads(&mut tape, &st).unwrap();
        for &l in &p.predict_labels(&mut tape, &st, &heads).unwrap() {
            assert!(tape.value(l).iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
        }
    }

    #[test]
    fn uniform_single_token_loss() {
        let dims = ParserDims { num_pos: 4, num_labels: 4, ..DIMS };
        let (mut ps, p) = randomized(dims, 8);
        for id in [p.pos_w, p.pos_b, p.label_w, p.label_b] {
            ps.get_mut(id).data_mut().fill(0.0);
        }
        let mut tape = Tape::new(&ps);
        let gold = GoldParse { pos: vec![1], heads: vec![0], labels: vec![3] };
        let loss = p.loss(&mut tape, &sentence(&[2]), &gold).unwrap();
        assert!((tape.scalar(loss) - 2.0 * 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn bad_gold_label_is_error() {
        let (ps, p) = randomized(DIMS, 9);
        let mut tape = Tape::new(&ps);
        let gold = GoldParse { pos: vec![1], heads: vec![0], labels: vec![3] };
        assert!(p.loss(&mut tape, &sentence(&[2]), &gold).is_err());
    }

    #[test]
    fn loss_gradient_matches_finite_differences_and_reaches_everything() {
        let (ps, p) = randomized(DIMS, 10);
        let batch = [
            (sentence(&[2, 3, 4]), GoldParse { pos: vec![0, 1, 2], heads: vec![2, 0, 2], labels: vec![0, 2, 1] }),
            (sentence(&[5, 6]), GoldParse { pos: vec![3, 1], heads: vec![0, 1], labels: vec![2, 0] }),
        ];
        let f = |ps: &ParamSet<f64>| {
            let mut tape = Tape::new(ps);
            let terms = batch.iter().map(|(s, g)| p.loss(&mut tape, s, g)).collect::<Result<Vec<_>>>()?;
            let loss = tape.add_all(&terms);
            Ok((tape.scalar(loss), tape.backward(loss)?))
        };
        let (_, g) = f(&ps).unwrap();
        for id in ps.ids() {
            assert!(g.is_nonzero(id), "{} received no gradient", ps.name(id));
        }
        let err = finite_diff_check(f, &ps, &GradCheckOptions { coords_per_tensor: 12, ..Default::default() }).unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn bind_recovers_dims_and_rejects_bad_shapes() {
        let (mut ps, p) = randomized(DIMS, 11);
        assert_eq!(LatentParser::bind(&ps).unwrap(), p);
        *ps.by_name_mut("parser.head.w").unwrap() = Tensor::zeros(&[2, 2]);
        assert!(LatentParser::bind(&ps).is_err());
    }
}
