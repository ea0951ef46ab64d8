use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use super::RunConfig;
use crate::corpus::{
    read_conll, read_lines, tokenize, LengthStats, ParallelPair, TagSets, TreebankSentence, Vocabularies,
};
use crate::error::{Error, Result};
use crate::eval::{bleu, export_dot, parser_uas, perplexity, write_metrics};
use crate::model::{Example, ExternalParse, HeadMode, Model, ParserDims};
use crate::search::{beam_search, greedy, replace_unknowns, Ensemble, ModelSession, StepScorer, Translation};
use crate::trainer::{average_checkpoints, gold_example, pretrain_parser, save_checkpoint, train, Checkpoint, DevExample, RunDir};

pub const RESOLVED_CONFIG: &str = "config.resolved";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    BuildVocab,
    Pretrain,
    Train,
    Translate,
    Evaluate,
    Average,
    EnsembleTranslate,
    ExportGraph,
    GenerateToy,
}

impl Command {
    pub const ALL: [Command; 9] = [
        Command::BuildVocab,
        Command::Pretrain,
        Command::Train,
        Command::Translate,
        Command::Evaluate,
        Command::Average,
        Command::EnsembleTranslate,
        Command::ExportGraph,
        Command::GenerateToy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::BuildVocab => "build-vocab",
            Command::Pretrain => "pretrain",
            Command::Train => "train",
            Command::Translate => "translate",
            Command::Evaluate => "evaluate",
            Command::Average => "average",
            Command::EnsembleTranslate => "ensemble-translate",
            Command::ExportGraph => "export-graph",
            Command::GenerateToy => "generate-toy",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown command: {s}")))
    }
}

/// What a finished command produced.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub files: Vec<PathBuf>,
    pub metrics: BTreeMap<String, f64>,
}

/// Runs one subcommand to completion.
pub fn run(command: Command, cfg: &RunConfig) -> Result<Report> {
    match command {
        Command::BuildVocab => build_vocab(cfg),
        Command::Pretrain => pretrain(cfg),
        Command::Train => train_model(cfg),
        Command::Translate => translate(cfg, false),
        Command::EnsembleTranslate => translate(cfg, true),
        Command::Evaluate => evaluate(cfg),
        Command::Average => average(cfg),
        Command::ExportGraph => export_graphs(cfg),
        Command::GenerateToy => {
            let dir = cfg.path("output_dir")?;
            crate::toy::generate(cfg.train.seed).write(dir)?;
            Ok(Report { files: vec![dir.to_path_buf()], ..Default::default() })
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_resolved(cfg: &RunConfig, path: PathBuf, report: &mut Report) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    std::fs::write(&path, cfg.to_text()).map_err(|e| Error::io(&path, e))?;
    report.files.push(path);
    Ok(())
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn load_treebank(cfg: &RunConfig) -> Result<Vec<TreebankSentence>> {
    let mut bank = read_conll(cfg.path("treebank")?)?;
    if let Some(k) = cfg.treebank_limit {
        bank.truncate(k);
    }
    Ok(bank)
}

fn load_vocab(cfg: &RunConfig) -> Result<(Vocabularies, TagSets)> {
    let dir = cfg.path("vocab_dir")?;
    let tags = if TagSets::exists(dir) { TagSets::load(dir)? } else { TagSets::anonymous(cfg.num_pos, cfg.num_labels) };
    Ok((Vocabularies::load(dir)?, tags))
}

fn external_parse(sentence: &TreebankSentence, tags: &TagSets) -> Result<ExternalParse> {
    let labels = sentence
        .labels
        .iter()
        .map(|l| tags.labels.get(l).ok_or_else(|| Error::Invalid(format!("label {l:?} is not in the tag set"))))
        .collect::<Result<_>>()?;
    Ok(ExternalParse { heads: sentence.heads.clone(), labels })
}

/// Reads aligned source/target files (and parses, in fixed-head mode),
/// keeping pairs whose sides have 1 to `max_len` tokens.
fn load_pairs(
    cfg: &RunConfig,
    tags: &TagSets,
    source: &str,
    target: &str,
    parse: &str,
) -> Result<Vec<(ParallelPair, Option<ExternalParse>)>> {
    let src = read_lines(cfg.path(source)?)?;
    let tgt = read_lines(cfg.path(target)?)?;
    if src.len() != tgt.len() {
        return Err(Error::Invalid(format!("{source} has {} lines but {target} has {}", src.len(), tgt.len())));
    }
    let parses = sentence_parses(cfg, tags, parse, src.len())?;
    let mut out = vec![];
    for ((s, t), p) in src.iter().zip(&tgt).zip(parses) {
        let pair = ParallelPair::new(s, t);
        let keep = |v: &[String]| (1..=cfg.max_len).contains(&v.len());
        if keep(&pair.source) && keep(&pair.target) {
            out.push((pair, p));
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(out)
}

fn sentence_parses(cfg: &RunConfig, tags: &TagSets, key: &str, count: usize) -> Result<Vec<Option<ExternalParse>>> {
    if cfg.mode != HeadMode::Fixed {
        return Ok(vec![None; count]);
    }
    let bank = read_conll(cfg.path(key)?)?;
    if bank.len() != count {
        return Err(Error::Invalid(format!("{key} has {} sentences for {count} input lines", bank.len())));
    }
    bank.iter().map(|s| external_parse(s, tags).map(Some)).collect()
}

fn examples(vocabs: &Vocabularies, pairs: &[(ParallelPair, Option<ExternalParse>)]) -> Vec<Example> {
    pairs
        .iter()
        .map(|(p, parse)| Example {
            source: vocabs.encode_source(&p.source),
            target: vocabs.encode_target(&p.target),
            parse: parse.clone(),
        })
        .collect()
}

fn load_model(path: &Path, vocabs: &Vocabularies) -> Result<Model<f32>> {
    let ckpt = Checkpoint::load(path)?;
    if ckpt.is_parser_only() {
        return Err(Error::Checkpoint(format!("{} holds only a parser", path.display())));
    }
    let model = ckpt.into_model()?;
    model.check_vocabularies(vocabs)?;
    Ok(model)
}

fn build_vocab(cfg: &RunConfig) -> Result<Report> {
    let dir = cfg.path("vocab_dir")?;
    let src = read_lines(cfg.path("train_source")?)?;
    let tgt = read_lines(cfg.path("train_target")?)?;
    let pairs: Vec<ParallelPair> = src
        .iter()
        .zip(&tgt)
        .map(|(s, t)| ParallelPair::new(s, t))
        .filter(|p| (1..=cfg.max_len).contains(&p.source.len()) && (1..=cfg.max_len).contains(&p.target.len()))
        .collect();
    let treebank = if cfg.optional_path("treebank").is_some() { load_treebank(cfg)? } else { vec![] };
    let vocabs = Vocabularies::build(&pairs, &treebank, cfg.min_frequency, &cfg.ngram_orders)?;
    let tags = if treebank.is_empty() {
        TagSets::anonymous(cfg.num_pos, cfg.num_labels)
    } else {
        TagSets::from_treebank(&treebank)
    };
    vocabs.save(dir)?;
    tags.save(dir)?;
    let lengths = dir.join("lengths.tsv");
    LengthStats::from_pairs(&pairs, cfg.length_smoothing)?.save(&lengths)?;
    let mut report = Report::default();
    report.files.extend([dir.to_path_buf(), lengths]);
    report.metrics.insert("source_vocab".into(), vocabs.source.len() as f64);
    report.metrics.insert("target_vocab".into(), vocabs.target.len() as f64);
    report.metrics.insert("ngram_vocab".into(), vocabs.ngram.len() as f64);
    report.metrics.insert("pairs".into(), pairs.len() as f64);
    write_resolved(cfg, dir.join(RESOLVED_CONFIG), &mut report)?;
    Ok(report)
}

fn pretrain(cfg: &RunConfig) -> Result<Report> {
    let out = cfg.path("output_dir")?;
    create_dir(out)?;
    let (vocabs, tags) = load_vocab(cfg)?;
    let bank = load_treebank(cfg)?
        .iter()
        .map(|s| gold_example(s, &vocabs, &tags))
        .collect::<Result<Vec<_>>>()?;
    let dims = ParserDims {
        d1: cfg.d1,
        d2: cfg.d2,
        num_pos: tags.pos.len(),
        num_labels: tags.labels.len(),
        vocab: vocabs.source.len(),
        ngram_vocab: vocabs.ngram.len(),
    };
    let mut train_cfg = cfg.train.clone();
    train_cfg.epochs = cfg.pretrain_epochs;
    let outcome = pretrain_parser(&bank, dims, vocabs.source.content_hash(), &train_cfg)?;
    let mut report = Report::default();
    let ckpt = out.join("parser.bin");
    save_checkpoint(&outcome.checkpoint, &ckpt)?;
    let log = out.join("pretrain.jsonl");
    let lines: String = outcome
        .epoch_losses
        .iter()
        .enumerate()
        .map(|(k, l)| format!("{{\"epoch\":{},\"loss\":{l},\"lr\":{}}}\n", k + 1, train_cfg.learning_rate))
        .collect();
    std::fs::write(&log, lines).map_err(|e| Error::io(&log, e))?;
    let uas = parser_uas(&outcome.checkpoint.params, &outcome.parser, &bank)?;
    report.metrics.insert("train_uas".into(), uas);
    report.metrics.insert("final_loss".into(), outcome.epoch_losses.last().copied().unwrap_or(f64::NAN));
    report.files.extend([ckpt, log]);
    write_resolved(cfg, out.join(RESOLVED_CONFIG), &mut report)?;
    Ok(report)
}

fn train_model(cfg: &RunConfig) -> Result<Report> {
    let out = cfg.path("output_dir")?;
    create_dir(out)?;
    let mut report = Report::default();
    write_resolved(cfg, out.join(RESOLVED_CONFIG), &mut report)?;
    let (vocabs, tags) = load_vocab(cfg)?;
    let data = examples(&vocabs, &load_pairs(cfg, &tags, "train_source", "train_target", "train_parse")?);
    let dev: Vec<DevExample> = if cfg.optional_path("dev_source").is_some() {
        load_pairs(cfg, &tags, "dev_source", "dev_target", "dev_parse")?
            .iter()
            .map(|(p, parse)| DevExample {
                example: Example {
                    source: vocabs.encode_source(&p.source),
                    target: vocabs.encode_target(&p.target),
                    parse: parse.clone(),
                },
                reference: p.target.clone(),
            })
            .collect()
    } else {
        vec![]
    };
    let mut model = Model::<f32>::new(
        &vocabs,
        (cfg.d1, cfg.d2, cfg.d3),
        (tags.pos.len(), tags.labels.len()),
        cfg.mode,
        cfg.train.seed,
    );
    if let Some(path) = cfg.optional_path("parser_init") {
        let parser = Checkpoint::load(path)?;
        if parser.source_hash != vocabs.source.content_hash() {
            return Err(Error::VocabMismatch(format!("{} was pre-trained with another source vocabulary", path.display())));
        }
        model.load_parser(&parser.params)?;
    }
    let outcome = train(&mut model, &data, &dev, &vocabs, &cfg.train, Some(&RunDir(out.to_path_buf())))?;
    for (name, ckpt) in [("best.bin", &outcome.best), ("averaged.bin", &outcome.averaged)] {
        let p = out.join(name);
        save_checkpoint(ckpt, &p)?;
        report.files.push(p);
    }
    report.files.push(out.join("log.jsonl"));
    if let Some(p) = outcome.epoch_perplexities.last() {
        report.metrics.insert("train_perplexity".into(), *p);
    }
    report.metrics.insert("epochs".into(), outcome.epoch_perplexities.len() as f64);
    if let Some(e) = outcome.reached_target {
        report.metrics.insert("reached_target_epoch".into(), e as f64);
    }
    if let Some(b) = outcome.log.iter().rev().find_map(|r| r.dev_bleu) {
        report.metrics.insert("dev_bleu".into(), b);
    }
    Ok(report)
}

fn decode<S: StepScorer>(scorer: &mut S, cfg: &RunConfig, source_len: usize, lengths: Option<&LengthStats>) -> Result<Translation> {
    if cfg.greedy {
        greedy(scorer, cfg.decode_max_len)
    } else {
        beam_search(scorer, cfg.beam, cfg.decode_max_len, source_len, lengths)
    }
}

fn length_stats(cfg: &RunConfig) -> Result<Option<LengthStats>> {
    let p = cfg.path("vocab_dir")?.join("lengths.tsv");
    if p.exists() {
        Ok(Some(LengthStats::load(&p, cfg.length_smoothing)?))
    } else {
        Ok(None)
    }
}

/// Translations of `sentences`, in input order.
fn translate_all(
    cfg: &RunConfig,
    models: &[Model<f32>],
    vocabs: &Vocabularies,
    sentences: &[Vec<String>],
    parses: &[Option<ExternalParse>],
) -> Result<Vec<Vec<String>>> {
    let lengths = length_stats(cfg)?;
    let dictionary = match cfg.optional_path("dictionary") {
        Some(p) => Some(crate::search::load_dictionary(p)?),
        None => None,
    };
    let refs: Vec<&Model<f32>> = models.iter().collect();
    sentences
        .par_iter()
        .zip(parses)
        .map(|(tokens, parse)| {
            let source = vocabs.encode_source(tokens);
            let t = if refs.len() == 1 {
                decode(&mut ModelSession::new(refs[0], &source, parse.as_ref())?, cfg, tokens.len(), lengths.as_ref())?
            } else {
                decode(&mut Ensemble::new(&refs, &source, parse.as_ref())?, cfg, tokens.len(), lengths.as_ref())?
            };
            let words = vocabs.decode_target(&t.tokens);
            Ok(if cfg.replace_unknowns {
                replace_unknowns(&words, &t.attention, tokens, dictionary.as_ref())
            } else {
                words
            })
        })
        .collect()
}

fn translate(cfg: &RunConfig, ensemble: bool) -> Result<Report> {
    let output = cfg.path("output")?;
    let (vocabs, tags) = load_vocab(cfg)?;
    let paths: Vec<PathBuf> = if ensemble {
        if cfg.checkpoints.is_empty() {
            return Err(Error::Config("missing required path: checkpoints".into()));
        }
        cfg.checkpoints.clone()
    } else {
        vec![cfg.path("checkpoint")?.to_path_buf()]
    };
    let models = paths.iter().map(|p| load_model(p, &vocabs)).collect::<Result<Vec<_>>>()?;
    if models.iter().any(|m| m.mode() != models[0].mode()) {
        return Err(Error::Config("ensemble members use different head modes".into()));
    }
    let sentences: Vec<Vec<String>> = read_lines(cfg.path("input")?)?.iter().map(|l| tokenize(l)).collect();
    let parses = if models[0].mode() == HeadMode::Fixed {
        let mut c = cfg.clone();
        c.mode = HeadMode::Fixed;
        sentence_parses(&c, &tags, "input_parse", sentences.len())?
    } else {
        vec![None; sentences.len()]
    };
    let out = translate_all(cfg, &models, &vocabs, &sentences, &parses)?;
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let text: String = out.iter().map(|t| t.join(" ") + "\n").collect();
    std::fs::write(output, text).map_err(|e| Error::io(output, e))?;
    let mut report = Report { files: vec![output.to_path_buf()], ..Default::default() };
    report.metrics.insert("sentences".into(), out.len() as f64);
    write_resolved(cfg, sibling(output, ".config"), &mut report)?;
    Ok(report)
}

fn evaluate(cfg: &RunConfig) -> Result<Report> {
    let out = cfg.path("output_dir")?;
    create_dir(out)?;
    let (vocabs, tags) = load_vocab(cfg)?;
    let model = load_model(cfg.path("checkpoint")?, &vocabs)?;
    let mut c = cfg.clone();
    c.mode = model.mode();
    let pairs = load_pairs(&c, &tags, "test_source", "test_target", "test_parse")?;
    let data = examples(&vocabs, &pairs);
    let mut report = Report::default();
    report.metrics.insert("perplexity".into(), perplexity(&model, &data)?);
    let sources: Vec<Vec<String>> = pairs.iter().map(|(p, _)| p.source.clone()).collect();
    let parses: Vec<Option<ExternalParse>> = pairs.iter().map(|(_, p)| p.clone()).collect();
    let hyps = translate_all(cfg, std::slice::from_ref(&model), &vocabs, &sources, &parses)?;
    let refs: Vec<&[String]> = pairs.iter().map(|(p, _)| p.target.as_slice()).collect();
    let b = bleu(&hyps, &refs, 4, false)?;
    report.metrics.insert("bleu".into(), b.score);
    report.metrics.insert("brevity_penalty".into(), b.brevity_penalty);
    if cfg.optional_path("treebank").is_some() {
        let bank = load_treebank(cfg)?
            .iter()
            .map(|s| gold_example(s, &vocabs, &tags))
            .collect::<Result<Vec<_>>>()?;
        report.metrics.insert("uas".into(), parser_uas(&model.params, &model.net.parser, &bank)?);
    }
    let (tsv, json) = (out.join("metrics.tsv"), out.join("metrics.json"));
    write_metrics(&report.metrics, &tsv, &json)?;
    report.files.extend([tsv, json]);
    write_resolved(cfg, out.join(RESOLVED_CONFIG), &mut report)?;
    Ok(report)
}

fn average(cfg: &RunConfig) -> Result<Report> {
    let output = cfg.path("output")?;
    if cfg.checkpoints.is_empty() {
        return Err(Error::Config("missing required path: checkpoints".into()));
    }
    let ckpts = cfg.checkpoints.iter().map(|p| Checkpoint::load(p)).collect::<Result<Vec<_>>>()?;
    save_checkpoint(&average_checkpoints(&ckpts)?, output)?;
    let mut report = Report { files: vec![output.to_path_buf()], ..Default::default() };
    report.metrics.insert("checkpoints".into(), ckpts.len() as f64);
    write_resolved(cfg, sibling(output, ".config"), &mut report)?;
    Ok(report)
}

fn export_graphs(cfg: &RunConfig) -> Result<Report> {
    let out = cfg.path("output_dir")?;
    create_dir(out)?;
    let (vocabs, tags) = load_vocab(cfg)?;
    let model = load_model(cfg.path("checkpoint")?, &vocabs)?;
    if !model.mode().has_dependencies() {
        return Err(Error::Config(format!("a {} model has no latent graph to export", model.mode())));
    }
    let sentences: Vec<Vec<String>> = read_lines(cfg.path("input")?)?.iter().map(|l| tokenize(l)).collect();
    let mut c = cfg.clone();
    c.mode = model.mode();
    let parses = sentence_parses(&c, &tags, "input_parse", sentences.len())?;
    let mut report = Report::default();
    for (k, (tokens, parse)) in sentences.iter().zip(&parses).enumerate() {
        let session = ModelSession::new(&model, &vocabs.encode_source(tokens), parse.as_ref())?;
        let dot = export_dot(&session.latent_graph(), tokens, tags.labels.names(), cfg.threshold);
        let p = out.join(format!("graph-{:04}.dot", k + 1));
        std::fs::write(&p, dot).map_err(|e| Error::io(&p, e))?;
        report.files.push(p);
    }
    report.metrics.insert("graphs".into(), sentences.len() as f64);
    write_resolved(cfg, out.join(RESOLVED_CONFIG), &mut report)?;
    Ok(report)
}
