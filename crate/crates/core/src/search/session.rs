use crate::corpus::SourceSentence;
use crate::error::{Error, Result};
use crate::model::{Encoded, ExternalParse, LatentGraph, Model};
use crate::tensor::{Real, Tape, Var};

/// Output of one decoding step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput {
    /// Distribution over the target vocabulary.
    pub probs: Vec<f64>,
    /// Attention weights over the source words and `EOS`.
    pub attention: Vec<f64>,
}

/// An incremental next-word distribution, conditioned on one source sentence.
pub trait StepScorer {
    type State: Clone;

    /// The state before any word is emitted and the first distribution.
    fn start(&mut self) -> Result<(Self::State, StepOutput)>;

    /// Emits `word` from `state`, returning the successor and its distribution.
    fn step(&mut self, state: &Self::State, word: usize) -> Result<(Self::State, StepOutput)>;
}

/// Decoder state of a single model plus the `h̃` fed into the next step.
#[derive(Clone, Copy, Debug)]
pub struct SessionState {
    state: crate::model::DecoderState,
    h_tilde: Var,
}

/// One model decoding one sentence; owns the tape holding all intermediate values.
pub struct ModelSession<'m, T: Real> {
    model: &'m Model<T>,
    tape: Tape<'m, T>,
    enc: Encoded,
}

impl<'m, T: Real> ModelSession<'m, T> {
    pub fn new(model: &'m Model<T>, sentence: &SourceSentence, parse: Option<&ExternalParse>) -> Result<Self> {
        let mut tape = Tape::new(&model.params);
        let enc = model.net.encode(&mut tape, sentence, parse)?;
        Ok(ModelSession { model, tape, enc })
    }

    pub fn latent_graph(&self) -> LatentGraph {
        self.model.net.latent_graph(&self.tape, &self.enc)
    }

    fn run(&mut self, prev: Option<(usize, Var)>, state: crate::model::DecoderState) -> Result<(SessionState, StepOutput)> {
        let st = self.model.net.decode_step(&mut self.tape, prev, state, &self.enc)?;
        let out = StepOutput {
            probs: self.tape.value(st.probs).iter().map(|v| v.f64()).collect(),
            attention: self.tape.value(st.readout.attention.weights).iter().map(|v| v.f64()).collect(),
        };
        Ok((SessionState { state: st.state, h_tilde: st.readout.h_tilde }, out))
    }
}

impl<T: Real> StepScorer for ModelSession<'_, T> {
    type State = SessionState;

    fn start(&mut self) -> Result<(SessionState, StepOutput)> {
        let init = self.model.net.initial_state(&self.enc);
        self.run(None, init)
    }

    fn step(&mut self, state: &SessionState, word: usize) -> Result<(SessionState, StepOutput)> {
        self.run(Some((word, state.h_tilde)), state.state)
    }
}

/// Several models decoding the same sentence; distributions are averaged arithmetically.
pub struct Ensemble<'m, T: Real> {
    members: Vec<ModelSession<'m, T>>,
}

impl<'m, T: Real> Ensemble<'m, T> {
    pub fn new(models: &[&'m Model<T>], sentence: &SourceSentence, parse: Option<&ExternalParse>) -> Result<Self> {
        check_compatible(models)?;
        let members = models.iter().map(|m| ModelSession::new(m, sentence, parse)).collect::<Result<_>>()?;
        Ok(Ensemble { members })
    }

    fn combine(outputs: Vec<StepOutput>) -> StepOutput {
        let k = outputs.len() as f64;
        let mut probs = vec![0.0; outputs[0].probs.len()];
        let mut attention = vec![0.0; outputs[0].attention.len()];
        for o in &outputs {
            for (a, b) in probs.iter_mut().zip(&o.probs) {
                *a += b;
            }
            for (a, b) in attention.iter_mut().zip(&o.attention) {
                *a += b;
            }
        }
        probs.iter_mut().chain(attention.iter_mut()).for_each(|v| *v /= k);
        StepOutput { probs, attention }
    }
}

/// Errors unless all models share both vocabularies.
pub fn check_compatible<T: Real>(models: &[&Model<T>]) -> Result<()> {
    let first = models.first().ok_or_else(|| Error::Invalid("an ensemble needs at least one model".into()))?;
    for (k, m) in models.iter().enumerate().skip(1) {
        if m.target_hash != first.target_hash || m.source_hash != first.source_hash {
            return Err(Error::VocabMismatch(format!("ensemble member {k} was trained with different vocabularies")));
        }
    }
    Ok(())
}

impl<T: Real> StepScorer for Ensemble<'_, T> {
    type State = Vec<SessionState>;

    fn start(&mut self) -> Result<(Self::State, StepOutput)> {
        let (states, outs): (Vec<_>, Vec<_>) = self.members.iter_mut().map(|m| m.start()).collect::<Result<Vec<_>>>()?.into_iter().unzip();
        Ok((states, Self::combine(outs)))
    }

    fn step(&mut self, state: &Self::State, word: usize) -> Result<(Self::State, StepOutput)> {
        let (states, outs): (Vec<_>, Vec<_>) = self
            .members
            .iter_mut()
            .zip(state)
            .map(|(m, s)| m.step(s, word))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip();
        Ok((states, Self::combine(outs)))
    }
}
