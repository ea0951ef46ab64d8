use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::corpus::{Smoothing, DEFAULT_NGRAM_ORDERS};
use crate::error::{Error, Result};
use crate::model::HeadMode;
use crate::trainer::TrainConfig;

/// Keys whose values are file or directory paths.
pub const PATH_KEYS: [&str; 18] = [
    "train_source",
    "train_target",
    "dev_source",
    "dev_target",
    "test_source",
    "test_target",
    "treebank",
    "train_parse",
    "dev_parse",
    "test_parse",
    "input",
    "input_parse",
    "parser_init",
    "checkpoint",
    "dictionary",
    "vocab_dir",
    "output_dir",
    "output",
];

/// Paths that must exist whenever they are set.
const INPUT_KEYS: [&str; 15] = [
    "train_source",
    "train_target",
    "dev_source",
    "dev_target",
    "test_source",
    "test_target",
    "treebank",
    "train_parse",
    "dev_parse",
    "test_parse",
    "input",
    "input_parse",
    "parser_init",
    "checkpoint",
    "dictionary",
];

/// Everything a subcommand can be told, with the published settings as defaults.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub mode: HeadMode,
    pub d1: usize,
    pub d2: usize,
    pub d3: usize,
    pub num_pos: usize,
    pub num_labels: usize,
    pub ngram_orders: Vec<usize>,
    pub min_frequency: usize,
    /// Longest sentence kept when reading parallel corpora.
    pub max_len: usize,
    /// Keep only the first K treebank sentences.
    pub treebank_limit: Option<usize>,
    pub pretrain_epochs: usize,
    pub beam: usize,
    pub greedy: bool,
    pub decode_max_len: usize,
    pub length_smoothing: Smoothing,
    pub replace_unknowns: bool,
    pub threshold: f64,
    pub checkpoints: Vec<PathBuf>,
    pub paths: BTreeMap<&'static str, PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: TrainConfig::default(),
            mode: HeadMode::Learned,
            d1: 100,
            d2: 50,
            d3: 128,
            num_pos: 45,
            num_labels: 40,
            ngram_orders: DEFAULT_NGRAM_ORDERS.to_vec(),
            min_frequency: 1,
            max_len: 50,
            treebank_limit: None,
            pretrain_epochs: 10,
            beam: 12,
            greedy: false,
            decode_max_len: 100,
            length_smoothing: Smoothing::AddOne,
            replace_unknowns: true,
            threshold: crate::eval::DEFAULT_DOT_THRESHOLD,
            checkpoints: vec![],
            paths: BTreeMap::new(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("invalid value for {key}: {value:?}")))
}

fn optional<T: FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    if value == "none" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| parse(key, s)).collect()
}

fn show_opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), T::to_string)
}

impl RunConfig {
    /// Defaults, then `file`, then `LGPNMT_SEED` (passed as `env_seed`), then `overrides`.
    pub fn resolve(file: Option<&Path>, env_seed: Option<&str>, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let base = path.parent().unwrap_or(Path::new(""));
            cfg.apply_text(&text, &path.display().to_string(), base)?;
        }
        if let Some(seed) = env_seed {
            cfg.set("seed", seed, Path::new(""))?;
        }
        for (k, v) in overrides {
            cfg.set(k, v, Path::new(""))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies `key = value` lines; relative paths are taken relative to `base`.
    pub fn apply_text(&mut self, text: &str, source: &str, base: &Path) -> Result<()> {
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(format!("{source}:{}", k + 1), "expected `key = value`"))?;
            self.set(key.trim(), value.trim(), base)?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let t = &mut self.train;
        match key {
            "learning_rate" => t.learning_rate = parse(key, value)?,
            "momentum" => t.momentum = parse(key, value)?,
            "clip" => t.clip = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "dropout" => t.dropout = parse(key, value)?,
            "l2" => t.l2 = parse(key, value)?,
            "blackout_k" => t.blackout_k = parse(key, value)?,
            "blackout_alpha" => t.blackout_alpha = parse(key, value)?,
            "epochs" => t.epochs = parse(key, value)?,
            "checkpoints_per_epoch" => t.checkpoints_per_epoch = parse(key, value)?,
            "seed" => t.seed = parse(key, value)?,
            "dev_max_len" => t.dev_max_len = parse(key, value)?,
            "freeze_parser_embeddings" => t.freeze_parser_embeddings = parse(key, value)?,
            "target_perplexity" => t.target_perplexity = optional(key, value)?,
            "mode" => self.mode = parse(key, value)?,
            "d1" => self.d1 = parse(key, value)?,
            "d2" => self.d2 = parse(key, value)?,
            "d3" => self.d3 = parse(key, value)?,
            "num_pos" => self.num_pos = parse(key, value)?,
            "num_labels" => self.num_labels = parse(key, value)?,
            "ngram_orders" => self.ngram_orders = list(key, value)?,
            "min_frequency" => self.min_frequency = parse(key, value)?,
            "max_len" => self.max_len = parse(key, value)?,
            "treebank_limit" => self.treebank_limit = optional(key, value)?,
            "pretrain_epochs" => self.pretrain_epochs = parse(key, value)?,
            "beam" => self.beam = parse(key, value)?,
            "greedy" => self.greedy = parse(key, value)?,
            "decode_max_len" => self.decode_max_len = parse(key, value)?,
            "length_smoothing" => {
                self.length_smoothing = match value {
                    "add-one" => Smoothing::AddOne,
                    "none" => Smoothing::None,
                    _ => return Err(Error::Config(format!("invalid value for {key}: {value:?}"))),
                }
            }
            "replace_unknowns" => self.replace_unknowns = parse(key, value)?,
            "threshold" => self.threshold = parse(key, value)?,
            "checkpoints" => {
                self.checkpoints = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| base.join(s))
                    .collect()
            }
            _ => match PATH_KEYS.iter().find(|k| **k == key) {
                Some(k) if value.is_empty() || value == "none" => {
                    self.paths.remove(k);
                }
                Some(k) => {
                    self.paths.insert(k, base.join(value));
                }
                None => return Err(Error::Config(format!("unknown key: {key}"))),
            },
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        for (k, v) in [("d1", self.d1), ("d2", self.d2), ("d3", self.d3), ("num_pos", self.num_pos)] {
            if v == 0 {
                return Err(Error::Config(format!("invalid value for {k}: must be positive")));
            }
        }
        if self.num_labels == 0 || self.beam == 0 || self.max_len == 0 || self.decode_max_len == 0 {
            return Err(Error::Config("num_labels, beam, max_len and decode_max_len must be positive".into()));
        }
        if self.ngram_orders.contains(&0) {
            return Err(Error::Config("invalid value for ngram_orders: orders must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config("invalid value for threshold: must lie in [0, 1]".into()));
        }
        for key in INPUT_KEYS {
            if let Some(p) = self.paths.get(key) {
                if !p.exists() {
                    return Err(Error::Config(format!("{key}: {} does not exist", p.display())));
                }
            }
        }
        if let Some(p) = self.checkpoints.iter().find(|p| !p.exists()) {
            return Err(Error::Config(format!("checkpoints: {} does not exist", p.display())));
        }
        Ok(())
    }

    /// The path stored under `key`, or an error naming the key.
    pub fn path(&self, key: &str) -> Result<&Path> {
        self.paths
            .get(key)
            .map(PathBuf::as_path)
            .ok_or_else(|| Error::Config(format!("missing required path: {key}")))
    }

    pub fn optional_path(&self, key: &str) -> Option<&Path> {
        self.paths.get(key).map(PathBuf::as_path)
    }

    /// Every key with its resolved value, one `key = value` per line; reading
    /// it back yields an identical configuration.
    pub fn to_text(&self) -> String {
        let t = &self.train;
        let join = |v: &[String]| v.join(",");
        let mut rows: Vec<(&str, String)> = vec![
            ("learning_rate", t.learning_rate.to_string()),
            ("momentum", t.momentum.to_string()),
            ("clip", t.clip.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("dropout", t.dropout.to_string()),
            ("l2", t.l2.to_string()),
            ("blackout_k", t.blackout_k.to_string()),
            ("blackout_alpha", t.blackout_alpha.to_string()),
            ("epochs", t.epochs.to_string()),
            ("checkpoints_per_epoch", t.checkpoints_per_epoch.to_string()),
            ("seed", t.seed.to_string()),
            ("dev_max_len", t.dev_max_len.to_string()),
            ("freeze_parser_embeddings", t.freeze_parser_embeddings.to_string()),
            ("target_perplexity", show_opt(&t.target_perplexity)),
            ("mode", self.mode.to_string()),
            ("d1", self.d1.to_string()),
            ("d2", self.d2.to_string()),
            ("d3", self.d3.to_string()),
            ("num_pos", self.num_pos.to_string()),
            ("num_labels", self.num_labels.to_string()),
            ("ngram_orders", join(&self.ngram_orders.iter().map(usize::to_string).collect::<Vec<_>>())),
            ("min_frequency", self.min_frequency.to_string()),
            ("max_len", self.max_len.to_string()),
            ("treebank_limit", show_opt(&self.treebank_limit)),
            ("pretrain_epochs", self.pretrain_epochs.to_string()),
            ("beam", self.beam.to_string()),
            ("greedy", self.greedy.to_string()),
            ("decode_max_len", self.decode_max_len.to_string()),
            ("length_smoothing", match self.length_smoothing {
                Smoothing::AddOne => "add-one".into(),
                Smoothing::None => "none".into(),
            }),
            ("replace_unknowns", self.replace_unknowns.to_string()),
            ("threshold", self.threshold.to_string()),
            ("checkpoints", join(&self.checkpoints.iter().map(|p| p.display().to_string()).collect::<Vec<_>>())),
        ];
        for key in PATH_KEYS {
            rows.push((key, self.paths.get(key).map_or_else(|| "none".into(), |p| p.display().to_string())));
        }
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}
