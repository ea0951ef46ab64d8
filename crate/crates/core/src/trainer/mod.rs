//! Initialisation, optimisation, checkpointing and the training loops.

mod checkpoint;

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

pub use checkpoint::{average_checkpoints, Checkpoint};

use crate::corpus::{SourceSentence, TagSets, TreebankSentence, Vocabularies};
use crate::error::{Error, Result};
use crate::eval::bleu;
use crate::model::{Dropout, Example, GoldParse, LatentParser, Model, NoiseSampler, OutputLoss, ParserDims};
use crate::search::{greedy, ModelSession};
use crate::tensor::{Gradients, ParamSet, Real, Tape};

/// Optimisation settings shared by translation training and parser pre-training.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub clip: f64,
    pub batch_size: usize,
    pub dropout: f64,
    pub l2: f64,
    /// Negative samples per minibatch; 0 trains with the full softmax.
    pub blackout_k: usize,
    pub blackout_alpha: f64,
    pub epochs: usize,
    pub checkpoints_per_epoch: usize,
    pub seed: u64,
    /// Step limit for greedy decoding of the dev set.
    pub dev_max_len: usize,
    pub freeze_parser_embeddings: bool,
    /// Stop as soon as an epoch's training perplexity falls below this.
    pub target_perplexity: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1.0,
            momentum: 0.75,
            clip: 1.0,
            batch_size: 128,
            dropout: 0.2,
            l2: 1e-6,
            blackout_k: 0,
            blackout_alpha: 1.0,
            epochs: 10,
            checkpoints_per_epoch: 2,
            seed: 1,
            dev_max_len: 100,
            freeze_parser_embeddings: false,
            target_perplexity: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |k: &str| Err(Error::Config(format!("invalid value for {k}")));
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum");
        }
        if !(self.clip > 0.0) {
            return bad("clip");
        }
        if self.batch_size == 0 {
            return bad("batch_size");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout");
        }
        if !(self.l2 >= 0.0) {
            return bad("l2");
        }
        if !(self.blackout_alpha > 0.0) {
            return bad("blackout_alpha");
        }
        if self.checkpoints_per_epoch == 0 {
            return bad("checkpoints_per_epoch");
        }
        Ok(())
    }
}

/// Fills every tensor according to its role, identified by name.
///
/// Parser matrices draw from `±√6/√(rows+cols)`, translation matrices and
/// embeddings from `±0.1`. Biases and the parser's softmax weights start at
/// zero, except LSTM forget-gate biases, which start at one.
pub fn init_params<T: Real>(params: &mut ParamSet<T>, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let name = params.name(id).to_string();
        let t = params.get_mut(id);
        if name.ends_with(".b") {
            t.data_mut().fill(T::zero());
            if name.contains(".lstm") {
                let h = t.len() / 4;
                t.data_mut()[h..2 * h].fill(T::one());
            }
            continue;
        }
        if name == "parser.pos.w" || name == "parser.label.w" {
            t.data_mut().fill(T::zero());
            continue;
        }
        let bound = if name.starts_with("parser.") {
            6f64.sqrt() / ((t.rows() + t.cols()) as f64).sqrt()
        } else {
            0.1
        };
        for v in t.data_mut() {
            *v = T::of(rng.random_range(-bound..=bound));
        }
    }
}

fn is_bias(name: &str) -> bool {
    name.ends_with(".b")
}

/// Rescales `grads` to global norm `c` when it exceeds `c`; returns the norm before clipping.
pub fn clip_gradients<T: Real>(grads: &mut Gradients<T>, c: f64) -> Result<f64> {
    if !grads.all_finite() {
        return Err(Error::NonFinite("gradient".into()));
    }
    let norm = grads.global_norm().f64();
    if norm > c {
        grads.scale(T::of(c / norm));
    }
    Ok(norm)
}

/// Momentum buffers, one per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Velocity<T> {
    slots: Vec<Vec<T>>,
}

impl<T: Real> Velocity<T> {
    pub fn zeros_like(params: &ParamSet<T>) -> Self {
        Velocity { slots: params.ids().map(|id| vec![T::zero(); params.get(id).len()]).collect() }
    }
}

/// `v ← μv − lr(g + λθ)`, `θ ← θ + v`. Biases get no weight decay; `frozen` tensors are untouched.
pub fn sgd_momentum_step<T: Real>(
    params: &mut ParamSet<T>,
    grads: &Gradients<T>,
    velocity: &mut Velocity<T>,
    lr: f64,
    momentum: f64,
    l2: f64,
    frozen: &[bool],
) {
    let (lr, mu) = (T::of(lr), T::of(momentum));
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        if frozen.get(id.index()).copied().unwrap_or(false) {
            continue;
        }
        let decay = T::of(if is_bias(params.name(id)) { 0.0 } else { l2 });
        let g = grads.get(id);
        let v = &mut velocity.slots[id.index()];
        if g.is_none() && decay == T::zero() && v.iter().all(|x| *x == T::zero()) {
            continue;
        }
        let theta = params.get_mut(id).data_mut();
        for k in 0..theta.len() {
            let gk = g.map_or(T::zero(), |g| g[k]);
            v[k] = mu * v[k] - lr * (gk + decay * theta[k]);
            theta[k] += v[k];
        }
    }
}

/// Halves `lr` when the latest dev score is strictly below the previous one.
pub fn schedule_lr(history: &[f64], lr: f64) -> f64 {
    match history {
        [.., prev, last] if last < prev => lr / 2.0,
        _ => lr,
    }
}

/// A dev-set example with the reference as plain tokens.
#[derive(Clone, Debug, PartialEq)]
pub struct DevExample {
    pub example: Example,
    pub reference: Vec<String>,
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogRecord {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dev_bleu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_perplexity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
}

pub struct TrainOutcome {
    /// Latest checkpoint with the highest dev BLEU (the last one without a dev set).
    pub best: Checkpoint,
    /// Mean of all checkpoints from the best epoch onward.
    pub averaged: Checkpoint,
    pub log: Vec<LogRecord>,
    pub epoch_perplexities: Vec<f64>,
    /// First epoch whose training perplexity fell below the target.
    pub reached_target: Option<usize>,
}

/// Where a training run writes checkpoints (`ckpt-E-H.bin`) and `log.jsonl`.
#[derive(Clone, Debug)]
pub struct RunDir(pub PathBuf);

impl RunDir {
    fn log_line(&self, record: &LogRecord) -> Result<()> {
        use std::io::Write;
        let path = self.0.join("log.jsonl");
        let mut f = std::fs::OpenOptions::new().create(true).append(true).open(&path).map_err(|e| Error::io(&path, e))?;
        let line = serde_json::to_string(record).map_err(|e| Error::Invalid(e.to_string()))?;
        writeln!(f, "{line}").map_err(|e| Error::io(&path, e))
    }
}

fn dropout_rng(seed: u64, step: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((step as u64) << 24) | index as u64);
    rng
}

/// Sums per-example results in index order so the total is independent of thread scheduling.
fn batch_gradients<T: Real, F>(params: &ParamSet<T>, batch: &[usize], f: F) -> Result<(f64, Gradients<T>)>
where
    F: Fn(usize, usize) -> Result<(f64, Gradients<T>)> + Sync,
{
    let mut total = Gradients::zeros_like(params);
    let mut loss = 0.0;
    let width = rayon::current_num_threads().max(1) * 2;
    for (c, chunk) in batch.chunks(width).enumerate() {
        let parts: Vec<(f64, Gradients<T>)> =
            chunk.par_iter().enumerate().map(|(j, &idx)| f(c * width + j, idx)).collect::<Result<_>>()?;
        for (l, g) in parts {
            loss += l;
            total.accumulate(&g);
        }
    }
    let scale = 1.0 / batch.len() as f64;
    total.scale(T::of(scale));
    Ok((loss * scale, total))
}

fn checkpoint_points(batches: usize, per_epoch: usize) -> Vec<usize> {
    let mut pts: Vec<usize> = (1..=per_epoch).map(|k| (k * batches).div_ceil(per_epoch)).collect();
    pts.dedup();
    pts
}

/// Greedy-decoding BLEU of `model` on `dev`.
pub fn dev_bleu(model: &Model<f32>, dev: &[DevExample], vocabs: &Vocabularies, max_len: usize) -> Result<f64> {
    let hyps: Vec<Vec<String>> = dev
        .par_iter()
        .map(|d| {
            let mut s = ModelSession::new(model, &d.example.source, d.example.parse.as_ref())?;
            Ok(vocabs.decode_target(&greedy(&mut s, max_len)?.tokens))
        })
        .collect::<Result<_>>()?;
    let refs: Vec<&[String]> = dev.iter().map(|d| d.reference.as_slice()).collect();
    Ok(bleu(&hyps, &refs, 4, false)?.score)
}

/// Trains `model` in place with minibatch momentum SGD.
///
/// Checkpoints are taken `checkpoints_per_epoch` times per epoch; each one is
/// scored by greedy dev BLEU, which drives the learning-rate schedule.
pub fn train(
    model: &mut Model<f32>,
    data: &[Example],
    dev: &[DevExample],
    vocabs: &Vocabularies,
    cfg: &TrainConfig,
    run_dir: Option<&RunDir>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if let Some(dir) = run_dir {
        std::fs::create_dir_all(&dir.0).map_err(|e| Error::io(&dir.0, e))?;
        let log = dir.0.join("log.jsonl");
        if log.exists() {
            std::fs::remove_file(&log).map_err(|e| Error::io(&log, e))?;
        }
    }
    let sampler = if cfg.blackout_k > 0 {
        let mut counts = vec![0u64; model.net.dims.target_vocab];
        for e in data {
            for &y in &e.target {
                counts[y] += 1;
            }
        }
        Some(NoiseSampler::from_counts(&counts, cfg.blackout_alpha)?)
    } else {
        None
    };
    let frozen: Vec<bool> = model
        .params
        .ids()
        .map(|id| cfg.freeze_parser_embeddings && LatentParser::embedding_names().contains(&model.params.name(id)))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut velocity = Velocity::zeros_like(&model.params);
    let mut lr = cfg.learning_rate;
    let mut step = 0usize;
    let mut history: Vec<f64> = vec![];
    let mut log = vec![];
    let mut perplexities = vec![];
    let mut reached_target = None;
    let mut best: Option<(f64, Checkpoint)> = None;
    // Checkpoints from the best epoch onward, tagged with their epoch.
    let mut pool: Vec<(usize, Checkpoint)> = vec![];
    let batches = data.len().div_ceil(cfg.batch_size);
    let points = checkpoint_points(batches, cfg.checkpoints_per_epoch);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut epoch_nll, mut epoch_tokens) = (0.0f64, 0usize);
        for (bi, batch) in order.chunks(cfg.batch_size).enumerate() {
            step += 1;
            let noise = match &sampler {
                Some(s) => Some(s.draw(cfg.blackout_k, &mut rng)?),
                None => None,
            };
            let net = &model.net;
            let params = &model.params;
            let (loss, mut grads) = batch_gradients(params, batch, |j, idx| {
                let e = &data[idx];
                let mut tape = Tape::new(params);
                let output = match (&noise, &sampler) {
                    (Some(n), Some(s)) => OutputLoss::Blackout { noise: n, log_q: s.log_q() },
                    _ => OutputLoss::Full,
                };
                let mut drng = dropout_rng(cfg.seed, step, j);
                let dropout = (cfg.dropout > 0.0).then_some(Dropout { rate: cfg.dropout, rng: &mut drng });
                let l = net.sequence_loss(&mut tape, &e.source, &e.target, e.parse.as_ref(), output, dropout)?;
                let value = tape.scalar(l) as f64;
                Ok((value, tape.backward(l)?))
            })
            .map_err(|e| match e {
                Error::NonFinite(m) => Error::Divergence(format!("step {step}: non-finite {m}")),
                other => other,
            })?;
            if !loss.is_finite() {
                return Err(Error::Divergence(format!("step {step}: loss {loss}")));
            }
            epoch_nll += loss * batch.len() as f64;
            epoch_tokens += batch.iter().map(|&i| data[i].target.len()).sum::<usize>();
            clip_gradients(&mut grads, cfg.clip).map_err(|_| Error::Divergence(format!("step {step}: non-finite gradient")))?;
            sgd_momentum_step(&mut model.params, &grads, &mut velocity, lr, cfg.momentum, cfg.l2, &frozen);
            let mut record =
                LogRecord { step, epoch, loss, lr, dev_bleu: None, train_perplexity: None, checkpoint: None };

            if let Some(k) = points.iter().position(|&p| p == bi + 1) {
                let ckpt = Checkpoint::from_model(model);
                let score = if dev.is_empty() { None } else { Some(dev_bleu(model, dev, vocabs, cfg.dev_max_len)?) };
                if let Some(s) = score {
                    history.push(s);
                    lr = schedule_lr(&history, lr);
                }
                let better = match (&best, score) {
                    (None, _) => true,
                    (Some(_), None) => true,
                    (Some((b, _)), Some(s)) => s >= *b,
                };
                if better {
                    pool.retain(|(e, _)| *e >= epoch);
                    best = Some((score.unwrap_or(f64::NEG_INFINITY), ckpt.clone()));
                }
                if let Some(dir) = run_dir {
                    let name = format!("ckpt-{epoch:03}-{}.bin", k + 1);
                    ckpt.save(&dir.0.join(&name))?;
                    record.checkpoint = Some(name);
                }
                pool.push((epoch, ckpt));
                record.dev_bleu = score;
            }
            if bi + 1 == batches {
                let ppl = (epoch_nll / epoch_tokens as f64).exp();
                perplexities.push(ppl);
                record.train_perplexity = Some(ppl);
            }
            log::debug!("step {step} epoch {epoch} loss {loss:.4} lr {lr}");
            if let Some(dir) = run_dir {
                dir.log_line(&record)?;
            }
            log.push(record);
        }
        let ppl = *perplexities.last().expect("one entry per epoch");
        log::info!("epoch {epoch}: training perplexity {ppl:.4}");
        if cfg.target_perplexity.is_some_and(|t| ppl < t) {
            reached_target = Some(epoch);
            break;
        }
    }
    let (_, best) = best.ok_or_else(|| Error::Config("no checkpoint was taken; epochs must be positive".into()))?;
    let pool: Vec<Checkpoint> = pool.into_iter().map(|(_, c)| c).collect();
    let averaged = average_checkpoints(&pool)?;
    Ok(TrainOutcome { best, averaged, log, epoch_perplexities: perplexities, reached_target })
}

/// Maps a treebank sentence onto model ids.
pub fn gold_example(
    sentence: &TreebankSentence,
    vocabs: &Vocabularies,
    tags: &TagSets,
) -> Result<(SourceSentence, GoldParse)> {
    let lookup = |set: &crate::corpus::LabelSet, v: &str, what: &str| {
        set.get(v).ok_or_else(|| Error::Invalid(format!("{what} {v:?} is not in the tag set")))
    };
    let pos = sentence.pos.iter().map(|p| lookup(&tags.pos, p, "POS tag")).collect::<Result<_>>()?;
    let labels = sentence.labels.iter().map(|l| lookup(&tags.labels, l, "label")).collect::<Result<_>>()?;
    Ok((vocabs.encode_source(&sentence.tokens), GoldParse { pos, heads: sentence.heads.clone(), labels }))
}

pub struct PretrainOutcome {
    pub checkpoint: Checkpoint,
    pub parser: LatentParser,
    /// Mean per-sentence loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Supervised multi-task training of the parser alone, without dropout and
/// with frozen word and n-gram embeddings.
pub fn pretrain_parser(
    treebank: &[(SourceSentence, GoldParse)],
    dims: ParserDims,
    source_hash: u64,
    cfg: &TrainConfig,
) -> Result<PretrainOutcome> {
    cfg.validate()?;
    if treebank.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut params = ParamSet::<f32>::new();
    let parser = LatentParser::register(&mut params, dims);
    init_params(&mut params, cfg.seed);
    let frozen: Vec<bool> =
        params.ids().map(|id| LatentParser::embedding_names().contains(&params.name(id))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..treebank.len()).collect();
    let mut velocity = Velocity::zeros_like(&params);
    let mut epoch_losses = vec![];
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let ps = &params;
            let (loss, mut grads) = batch_gradients(ps, batch, |_, idx| {
                let (s, g) = &treebank[idx];
                let mut tape = Tape::new(ps);
                let l = parser.loss(&mut tape, s, g)?;
                Ok((tape.scalar(l) as f64, tape.backward(l)?))
            })?;
            total += loss * batch.len() as f64;
            clip_gradients(&mut grads, cfg.clip)?;
            sgd_momentum_step(&mut params, &grads, &mut velocity, cfg.learning_rate, cfg.momentum, cfg.l2, &frozen);
        }
        let mean = total / treebank.len() as f64;
        log::info!("pretrain epoch {epoch}: loss {mean:.4}");
        epoch_losses.push(mean);
    }
    let checkpoint = Checkpoint { params, mode: crate::model::HeadMode::Learned, source_hash, target_hash: 0 };
    Ok(PretrainOutcome { checkpoint, parser, epoch_losses })
}

/// Writes `checkpoint`, creating parent directories.
pub fn save_checkpoint(checkpoint: &Checkpoint, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    checkpoint.save(path)
}
