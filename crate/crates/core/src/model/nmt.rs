use rand_chacha::ChaCha8Rng;

use super::blackout::{blackout_loss, NoiseSet};
use super::parser::{head_column, read_graph, LatentGraph};
use super::{HeadMode, Network};
use crate::corpus::SourceSentence;
use crate::error::{Error, Result};
use crate::tensor::{lstm_step, Real, Tape, Var};

/// Heads (1-based, 0 for ROOT) and label ids from an external parser.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExternalParse {
    pub heads: Vec<usize>,
    pub labels: Vec<usize>,
}

/// Everything the decoder needs from the source side.
#[derive(Clone, Debug)]
pub struct Encoded {
    /// Encoder states for the `N` words and `EOS`.
    pub states: Vec<Var>,
    pub state_matrix: Var,
    /// Memory cell after the `EOS` step.
    pub cell: Var,
    pub h2: Vec<Var>,
    /// Head distributions over `N + 1` candidates, one per word (empty without dependencies).
    pub heads: Vec<Var>,
    pub labels: Vec<Var>,
    pub dep: Vec<Var>,
    pub dep_matrix: Option<Var>,
}

impl Encoded {
    /// Number of source words, excluding `EOS`.
    pub fn len(&self) -> usize {
        self.states.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug)]
pub struct DecoderState {
    pub h: Var,
    pub c: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct Attention {
    pub context: Var,
    /// Weights over the `N + 1` encoder states.
    pub weights: Var,
    pub dep_context: Option<Var>,
    pub dep_weights: Option<Var>,
}

#[derive(Clone, Copy, Debug)]
pub struct Readout {
    pub h_tilde: Var,
    pub attention: Attention,
}

#[derive(Clone, Copy, Debug)]
pub struct DecodeStep {
    pub probs: Var,
    pub state: DecoderState,
    pub readout: Readout,
}

pub struct Dropout<'a> {
    pub rate: f64,
    pub rng: &'a mut ChaCha8Rng,
}

/// Output-layer objective used by [`Network::sequence_loss`].
#[derive(Clone, Copy, Debug)]
pub enum OutputLoss<'a> {
    Full,
    /// Sampled softmax against a fixed noise set, with `ln q` for the whole vocabulary.
    Blackout { noise: &'a NoiseSet, log_q: &'a [f64] },
}

impl Network {
    /// Runs the parser and the encoder, then builds the dependency composition vectors.
    pub fn encode<T: Real>(
        &self,
        tape: &mut Tape<'_, T>,
        sentence: &SourceSentence,
        parse: Option<&ExternalParse>,
    ) -> Result<Encoded> {
        let n = sentence.len();
        if self.mode == HeadMode::Fixed && parse.is_none() {
            return Err(Error::Invalid("fixed head mode needs an external parse".into()));
        }
        let ps = self.parser.run(tape, sentence)?;
        let mut h = tape.zeros(self.dims.d3);
        let mut c = tape.zeros(self.dims.d3);
        let mut states = Vec::with_capacity(n + 1);
        for (i, &w) in sentence.words.iter().enumerate() {
            let v = tape.lookup(self.nmt.src_emb, w);
            let x = tape.concat(&[v, ps.h2[i]]);
            (h, c) = lstm_step(tape, &self.nmt.encoder, h, c, x)?;
            states.push(h);
        }
        let state_matrix = tape.stack(&states);
        let mut enc = Encoded {
            states,
            state_matrix,
            cell: c,
            h2: ps.h2.clone(),
            heads: vec![],
            labels: vec![],
            dep: vec![],
            dep_matrix: None,
        };
        if !self.mode.has_dependencies() || n == 0 {
            return Ok(enc);
        }
        let (heads, labels) = match self.mode {
            HeadMode::Learned => {
                let heads = self.parser.select_heads(tape, &ps)?;
                let labels = self.parser.predict_labels(tape, &ps, &heads)?;
                (heads, labels)
            }
            HeadMode::Uniform => {
                let heads: Vec<Var> = (0..n)
                    .map(|i| {
                        let row = (0..=n).map(|k| if k == i { T::zero() } else { T::of(1.0 / n as f64) }).collect();
                        tape.vector(row)
                    })
                    .collect();
                let labels = self.parser.predict_labels(tape, &ps, &heads)?;
                (heads, labels)
            }
            HeadMode::Fixed => {
                let parse = parse.expect("checked above");
                if parse.heads.len() != n || parse.labels.len() != n {
                    return Err(Error::Invalid(format!("external parse does not cover {n} words")));
                }
                let mut heads = Vec::with_capacity(n);
                let mut labels = Vec::with_capacity(n);
                for i in 0..n {
                    let (head, label) = (parse.heads[i], parse.labels[i]);
                    if head > n || head == i + 1 || label >= self.dims.num_labels {
                        return Err(Error::Invalid(format!("external parse entry {} is out of range", i + 1)));
                    }
                    let mut row = vec![T::zero(); n + 1];
                    row[head_column(head, n)] = T::one();
                    heads.push(tape.vector(row));
                    let mut row = vec![T::zero(); self.dims.num_labels];
                    row[label] = T::one();
                    labels.push(tape.vector(row));
                }
                (heads, labels)
            }
            HeadMode::None => unreachable!(),
        };
        enc.heads = heads;
        enc.labels = labels;
        enc.dep = self.dep_compose(tape, &enc)?;
        enc.dep_matrix = Some(tape.stack(&enc.dep));
        Ok(enc)
    }

    /// `dep(w_i) = tanh(W_dep [h_i; Σ_j p(H=j|i) h_j; p(ℓ|i)])` over encoder states.
    pub fn dep_compose<T: Real>(&self, tape: &mut Tape<'_, T>, enc: &Encoded) -> Result<Vec<Var>> {
        let w = self.nmt.dep_w.ok_or_else(|| Error::Invalid("model has no dependency composition".into()))?;
        let w = tape.param(w);
        (0..enc.heads.len())
            .map(|i| {
                let hbar = tape.matvec_t(enc.state_matrix, enc.heads[i]);
                let x = tape.concat(&[enc.states[i], hbar, enc.labels[i]]);
                let z = tape.matvec(w, x);
                Ok(tape.tanh(z))
            })
            .collect()
    }

    pub fn initial_state(&self, enc: &Encoded) -> DecoderState {
        DecoderState { h: enc.states[enc.len()], c: enc.cell }
    }

    /// Dot-product attention over encoder states and, with dependencies, over `dep` vectors.
    pub fn attend<T: Real>(&self, tape: &mut Tape<'_, T>, h: Var, enc: &Encoded) -> Result<Attention> {
        let scores = tape.matvec(enc.state_matrix, h);
        let weights = tape.softmax(scores, None)?;
        let context = tape.matvec_t(enc.state_matrix, weights);
        let (dep_context, dep_weights) = match (self.mode.has_dependencies(), enc.dep_matrix) {
            (false, _) => (None, None),
            (true, None) => (Some(tape.zeros(self.dims.d3)), None),
            (true, Some(m)) => {
                let s = tape.matvec(m, h);
                let w = tape.softmax(s, None)?;
                (Some(tape.matvec_t(m, w)), Some(w))
            }
        };
        Ok(Attention { context, weights, dep_context, dep_weights })
    }

    /// `h̃ = tanh(W̃ [h_dec; a; a′])`, optionally with dropout applied to `h̃`.
    pub fn readout<T: Real>(
        &self,
        tape: &mut Tape<'_, T>,
        state: DecoderState,
        enc: &Encoded,
        dropout: Option<&mut Dropout<'_>>,
    ) -> Result<Readout> {
        let attention = self.attend(tape, state.h, enc)?;
        let mut parts = vec![state.h, attention.context];
        parts.extend(attention.dep_context);
        let x = tape.concat(&parts);
        let w = tape.param(self.nmt.attn_w);
        let z = tape.matvec(w, x);
        let mut h_tilde = tape.tanh(z);
        if let Some(d) = dropout {
            h_tilde = tape.dropout(h_tilde, d.rate, Some(&mut *d.rng));
        }
        Ok(Readout { h_tilde, attention })
    }

    /// Unnormalised scores over the target vocabulary; the embedding matrix doubles as output weights.
    pub fn output_logits<T: Real>(&self, tape: &mut Tape<'_, T>, h_tilde: Var) -> Var {
        let w = tape.param(self.nmt.tgt_emb);
        let b = tape.param(self.nmt.out_b);
        let s = tape.matvec(w, h_tilde);
        tape.add(s, b)
    }

    /// Advances the decoder LSTM on `[v_dec(word); h̃]`.
    pub fn feed<T: Real>(
        &self,
        tape: &mut Tape<'_, T>,
        state: DecoderState,
        word: usize,
        h_tilde: Var,
    ) -> Result<DecoderState> {
        let v = tape.lookup(self.nmt.tgt_emb, word);
        let x = tape.concat(&[v, h_tilde]);
        let (h, c) = lstm_step(tape, &self.nmt.decoder, state.h, state.c, x)?;
        Ok(DecoderState { h, c })
    }

    /// One inference step. `prev` is the previous word and `h̃`, or `None` for the first prediction.
    pub fn decode_step<T: Real>(
        &self,
        tape: &mut Tape<'_, T>,
        prev: Option<(usize, Var)>,
        state: DecoderState,
        enc: &Encoded,
    ) -> Result<DecodeStep> {
        let state = match prev {
            Some((w, h_tilde)) => self.feed(tape, state, w, h_tilde)?,
            None => state,
        };
        let readout = self.readout(tape, state, enc, None)?;
        let logits = self.output_logits(tape, readout.h_tilde);
        let probs = tape.softmax(logits, None)?;
        Ok(DecodeStep { probs, state, readout })
    }

    /// Teacher-forced negative log-likelihood of `target` (which must end with `EOS`).
    pub fn sequence_loss<T: Real>(
        &self,
        tape: &mut Tape<'_, T>,
        sentence: &SourceSentence,
        target: &[usize],
        parse: Option<&ExternalParse>,
        output: OutputLoss<'_>,
        mut dropout: Option<Dropout<'_>>,
    ) -> Result<Var> {
        if target.is_empty() {
            return Err(Error::Invalid("empty target sequence".into()));
        }
        let enc = self.encode(tape, sentence, parse)?;
        let mut state = self.initial_state(&enc);
        let mut terms = Vec::with_capacity(target.len());
        let mut prev: Option<Var> = None;
        for (t, &y) in target.iter().enumerate() {
            if let Some(h_tilde) = prev {
                state = self.feed(tape, state, target[t - 1], h_tilde)?;
            }
            let r = self.readout(tape, state, &enc, dropout.as_mut())?;
            terms.push(match output {
                OutputLoss::Full => {
                    let logits = self.output_logits(tape, r.h_tilde);
                    tape.cross_entropy(logits, y, None)?
                }
                OutputLoss::Blackout { noise, log_q } => {
                    let negatives = noise.negatives_for(y);
                    blackout_loss(tape, self.nmt.tgt_emb, self.nmt.out_b, r.h_tilde, y, &negatives, log_q)?
                }
            });
            prev = Some(r.h_tilde);
        }
        Ok(tape.add_all(&terms))
    }

    /// Reads the latent graph of an encoded sentence off the tape.
    pub fn latent_graph<T: Real>(&self, tape: &Tape<'_, T>, enc: &Encoded) -> LatentGraph {
        read_graph(tape, &enc.heads, &enc.labels, &enc.h2[..enc.len()])
    }
}
