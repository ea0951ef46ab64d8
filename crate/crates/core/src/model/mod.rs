//! The latent graph parser and the attention-based translation model built on it.

mod blackout;
mod nmt;
mod parser;

use std::fmt;
use std::str::FromStr;

use crate::corpus::{SourceSentence, Vocabularies};
use crate::error::{Error, Result};
use crate::tensor::{LstmParams, ParamId, ParamSet, Real, Tensor};

pub use blackout::{blackout_loss, NoiseSampler, NoiseSet};
pub use nmt::{Attention, DecodeStep, DecoderState, Dropout, Encoded, ExternalParse, OutputLoss, Readout};
pub use parser::{GoldParse, LatentGraph, LatentParser, ParserDims, ParserStates, PosLayer};

/// A source sentence with its target ids (ending in `EOS`) and, for the
/// fixed head mode, an external parse.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub source: SourceSentence,
    pub target: Vec<usize>,
    pub parse: Option<ExternalParse>,
}

/// How the head distributions feeding the dependency composition are obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum HeadMode {
    /// Predicted by the latent parser.
    #[default]
    Learned,
    /// Fixed to `1/N` over all candidates.
    Uniform,
    /// One-hot heads and labels from an external parser.
    Fixed,
    /// No dependency composition at all (sequential model).
    None,
}

impl HeadMode {
    pub fn code(self) -> u8 {
        match self {
            HeadMode::Learned => 0,
            HeadMode::Uniform => 1,
            HeadMode::Fixed => 2,
            HeadMode::None => 3,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        Ok(match code {
            0 => HeadMode::Learned,
            1 => HeadMode::Uniform,
            2 => HeadMode::Fixed,
            3 => HeadMode::None,
            _ => return Err(Error::Checkpoint(format!("unknown head mode byte {code}"))),
        })
    }

    pub fn has_dependencies(self) -> bool {
        self != HeadMode::None
    }
}

impl fmt::Display for HeadMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HeadMode::Learned => "learned",
            HeadMode::Uniform => "uniform",
            HeadMode::Fixed => "fixed",
            HeadMode::None => "none",
        })
    }
}

impl FromStr for HeadMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "learned" | "lgp" => Ok(HeadMode::Learned),
            "uniform" | "uni" => Ok(HeadMode::Uniform),
            "fixed" | "dep" => Ok(HeadMode::Fixed),
            "none" | "seq" => Ok(HeadMode::None),
            _ => Err(Error::Config(format!("unknown head mode {s:?}"))),
        }
    }
}

/// Layer sizes of a full model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelDims {
    pub d1: usize,
    pub d2: usize,
    pub d3: usize,
    pub num_pos: usize,
    pub num_labels: usize,
    pub source_vocab: usize,
    pub target_vocab: usize,
    pub ngram_vocab: usize,
}

impl ModelDims {
    pub fn parser(&self) -> ParserDims {
        ParserDims {
            d1: self.d1,
            d2: self.d2,
            num_pos: self.num_pos,
            num_labels: self.num_labels,
            vocab: self.source_vocab,
            ngram_vocab: self.ngram_vocab,
        }
    }
}

/// Handles to the `nmt.*` tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct NmtLayers {
    pub src_emb: ParamId,
    pub encoder: LstmParams,
    pub dep_w: Option<ParamId>,
    pub decoder: LstmParams,
    pub attn_w: ParamId,
    pub tgt_emb: ParamId,
    pub out_b: ParamId,
}

/// Parameter handles and sizes of a translation model, independent of the values.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub dims: ModelDims,
    pub mode: HeadMode,
    pub parser: LatentParser,
    pub nmt: NmtLayers,
}

impl Network {
    /// Registers zero tensors for every parameter the mode needs.
    pub fn register<T: Real>(ps: &mut ParamSet<T>, dims: ModelDims, mode: HeadMode) -> Self {
        let parser = LatentParser::register(ps, dims.parser());
        let d3 = dims.d3;
        let src_emb = ps.insert("nmt.src_emb", Tensor::zeros(&[dims.source_vocab, d3]));
        let encoder = LstmParams::register(ps, "nmt.encoder.lstm", d3 + 2 * dims.d1, d3);
        let dep_w = mode
            .has_dependencies()
            .then(|| ps.insert("nmt.dep.w", Tensor::zeros(&[d3, 2 * d3 + dims.num_labels])));
        let decoder = LstmParams::register(ps, "nmt.decoder.lstm", 2 * d3, d3);
        let attn_cols = if mode.has_dependencies() { 3 * d3 } else { 2 * d3 };
        let attn_w = ps.insert("nmt.attn.w", Tensor::zeros(&[d3, attn_cols]));
        let tgt_emb = ps.insert("nmt.tgt_emb", Tensor::zeros(&[dims.target_vocab, d3]));
        let out_b = ps.insert("nmt.out.b", Tensor::zeros(&[dims.target_vocab]));
        Network { dims, mode, parser, nmt: NmtLayers { src_emb, encoder, dep_w, decoder, attn_w, tgt_emb, out_b } }
    }

    /// Binds to an existing parameter set, checking every shape.
    pub fn bind<T: Real>(ps: &ParamSet<T>, mode: HeadMode) -> Result<Self> {
        let parser = LatentParser::bind(ps)?;
        let src = ps.get(ps.require("nmt.src_emb")?);
        let tgt = ps.get(ps.require("nmt.tgt_emb")?);
        let dims = ModelDims {
            d1: parser.dims.d1,
            d2: parser.dims.d2,
            d3: src.cols(),
            num_pos: parser.dims.num_pos,
            num_labels: parser.dims.num_labels,
            source_vocab: src.rows(),
            target_vocab: tgt.rows(),
            ngram_vocab: parser.dims.ngram_vocab,
        };
        let mut fresh = ParamSet::<T>::new();
        let expected = Network::register(&mut fresh, dims, mode);
        if fresh.len() != ps.len() {
            return Err(Error::Checkpoint(format!(
                "{} tensors present, mode {mode} needs {}",
                ps.len(),
                fresh.len()
            )));
        }
        for (name, t) in fresh.iter() {
            let got = ps.by_name(name).map(|x| x.dims().to_vec());
            if got.as_deref() != Some(t.dims()) {
                return Err(Error::Checkpoint(format!("{name}: expected shape {:?}, found {got:?}", t.dims())));
            }
        }
        let remap = |id: ParamId| ps.require(fresh.name(id));
        let lstm = |p: &LstmParams| -> Result<LstmParams> { Ok(LstmParams { w: remap(p.w)?, b: remap(p.b)?, ..*p }) };
        let n = &expected.nmt;
        Ok(Network {
            dims,
            mode,
            parser,
            nmt: NmtLayers {
                src_emb: remap(n.src_emb)?,
                encoder: lstm(&n.encoder)?,
                dep_w: n.dep_w.map(remap).transpose()?,
                decoder: lstm(&n.decoder)?,
                attn_w: remap(n.attn_w)?,
                tgt_emb: remap(n.tgt_emb)?,
                out_b: remap(n.out_b)?,
            },
        })
    }
}

/// A translation model: architecture, parameter values and the vocabularies it was built for.
#[derive(Clone, Debug)]
pub struct Model<T> {
    pub net: Network,
    pub params: ParamSet<T>,
    pub source_hash: u64,
    pub target_hash: u64,
}

impl<T: Real> Model<T> {
    /// A freshly initialised model sized for `vocabs`.
    pub fn new(
        vocabs: &Vocabularies,
        d: (usize, usize, usize),
        tags: (usize, usize),
        mode: HeadMode,
        seed: u64,
    ) -> Self {
        let dims = ModelDims {
            d1: d.0,
            d2: d.1,
            d3: d.2,
            num_pos: tags.0,
            num_labels: tags.1,
            source_vocab: vocabs.source.len(),
            target_vocab: vocabs.target.len(),
            ngram_vocab: vocabs.ngram.len(),
        };
        let mut params = ParamSet::new();
        let net = Network::register(&mut params, dims, mode);
        crate::trainer::init_params(&mut params, seed);
        Model { net, params, source_hash: vocabs.source.content_hash(), target_hash: vocabs.target.content_hash() }
    }

    pub fn from_params(params: ParamSet<T>, mode: HeadMode, source_hash: u64, target_hash: u64) -> Result<Self> {
        let net = Network::bind(&params, mode)?;
        Ok(Model { net, params, source_hash, target_hash })
    }

    pub fn mode(&self) -> HeadMode {
        self.net.mode
    }

    /// Errors unless `vocabs` are the ones the model was trained with.
    pub fn check_vocabularies(&self, vocabs: &Vocabularies) -> Result<()> {
        if vocabs.source.content_hash() != self.source_hash {
            return Err(Error::VocabMismatch("source vocabulary differs from the model's".into()));
        }
        if vocabs.target.content_hash() != self.target_hash {
            return Err(Error::VocabMismatch("target vocabulary differs from the model's".into()));
        }
        Ok(())
    }

    /// Overwrites `parser.*` tensors with those of a pre-trained parser.
    pub fn load_parser(&mut self, parser: &ParamSet<T>) -> Result<()> {
        let mut n = 0;
        for (name, t) in parser.iter().filter(|(n, _)| n.starts_with("parser.")) {
            let slot = self
                .params
                .by_name_mut(name)
                .ok_or_else(|| Error::Checkpoint(format!("model has no tensor {name}")))?;
            if slot.dims() != t.dims() {
                return Err(Error::Checkpoint(format!(
                    "{name}: parser has shape {:?}, model {:?}",
                    t.dims(),
                    slot.dims()
                )));
            }
            *slot = t.clone();
            n += 1;
        }
        if n == 0 {
            return Err(Error::Checkpoint("no parser tensors to load".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use crate::corpus::{SourceSentence, EOS_ID};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub const DIMS: ModelDims = ModelDims {
        d1: 4,
        d2: 3,
        d3: 5,
        num_pos: 3,
        num_labels: 3,
        source_vocab: 8,
        target_vocab: 6,
        ngram_vocab: 5,
    };

    pub fn random_model(mode: HeadMode, dims: ModelDims, seed: u64, scale: f64) -> (ParamSet<f64>, Network) {
        let mut ps = ParamSet::new();
        let net = Network::register(&mut ps, dims, mode);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ids: Vec<_> = ps.ids().collect();
        for id in ids {
            for v in ps.get_mut(id).data_mut() {
                *v = rng.random_range(-scale..scale);
            }
        }
        (ps, net)
    }

    pub fn sentence(words: &[usize], ngram_vocab: usize) -> SourceSentence {
        let mut w = words.to_vec();
        w.push(EOS_ID);
        let ngrams = w.iter().map(|&x| vec![x % ngram_vocab, (x * 3 + 1) % ngram_vocab]).collect();
        SourceSentence { tokens: words.iter().map(|x| format!("w{x}")).collect(), words: w, ngrams }
    }
}

#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;

    #[test]
    fn head_mode_codes_round_trip() {
        for m in [HeadMode::Learned, HeadMode::Uniform, HeadMode::Fixed, HeadMode::None] {
            assert_eq!(HeadMode::from_code(m.code()).unwrap(), m);
            assert_eq!(m.to_string().parse::<HeadMode>().unwrap(), m);
        }
        assert!(HeadMode::from_code(9).is_err());
    }

    #[test]
    fn sequential_mode_lacks_only_dependency_tensors() {
        let (lgp, _) = random_model(HeadMode::Learned, DIMS, 0, 0.1);
        let (seq, _) = random_model(HeadMode::None, DIMS, 0, 0.1);
        assert_eq!(lgp.len(), seq.len() + 1);
        assert!(seq.by_name("nmt.dep.w").is_none());
        assert_eq!(seq.by_name("nmt.attn.w").unwrap().dims(), &[5, 10]);
        assert_eq!(lgp.by_name("nmt.attn.w").unwrap().dims(), &[5, 15]);
    }

    #[test]
    fn bind_round_trips_and_checks_mode() {
        let (ps, net) = random_model(HeadMode::Learned, DIMS, 0, 0.1);
        assert_eq!(Network::bind(&ps, HeadMode::Learned).unwrap(), net);
        assert!(Network::bind(&ps, HeadMode::None).is_err());
    }
}
