//! `lgpnmt`: vocabulary building, parser pre-training, training, decoding and analysis.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lgpnmt_core::app::{self, Command, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "lgpnmt", version, about = "Translation with a latent graph parser")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Sub {
    /// Build vocabularies, tag sets and length statistics.
    BuildVocab,
    /// Pre-train the parser on a treebank.
    Pretrain,
    /// Train a translation model.
    Train,
    /// Translate `input` with one checkpoint.
    Translate,
    /// Perplexity, BLEU and (with a treebank) UAS on a test set.
    Evaluate,
    /// Average the parameters of `checkpoints`.
    Average,
    /// Translate `input` with the averaged distributions of `checkpoints`.
    EnsembleTranslate,
    /// Write one DOT file per input sentence.
    ExportGraph,
    /// Write the bundled synthetic corpus to `output_dir`.
    GenerateToy,
}

impl Sub {
    fn command(self) -> Command {
        match self {
            Sub::BuildVocab => Command::BuildVocab,
            Sub::Pretrain => Command::Pretrain,
            Sub::Train => Command::Train,
            Sub::Translate => Command::Translate,
            Sub::Evaluate => Command::Evaluate,
            Sub::Average => Command::Average,
            Sub::EnsembleTranslate => Command::EnsembleTranslate,
            Sub::ExportGraph => Command::ExportGraph,
            Sub::GenerateToy => Command::GenerateToy,
        }
    }
}

#[derive(Args, Debug, Default)]
struct Overrides {
    /// `key = value` configuration file.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Override any configuration key.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Decode greedily instead of with beam search.
    #[arg(long, global = true)]
    greedy: bool,
    #[arg(long, global = true)]
    beam: Option<usize>,
    #[arg(long, global = true)]
    threshold: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    mode: Option<String>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    vocab_dir: Option<String>,
    #[arg(long, global = true)]
    output_dir: Option<String>,
    #[arg(long, global = true)]
    output: Option<String>,
    #[arg(long, global = true)]
    input: Option<String>,
    #[arg(long, global = true)]
    checkpoint: Option<String>,
    /// Comma-separated checkpoint files.
    #[arg(long, global = true)]
    checkpoints: Option<String>,
    #[arg(long, global = true)]
    parser_init: Option<String>,
}

impl Overrides {
    fn pairs(&self) -> Result<Vec<(String, String)>, String> {
        let mut out = vec![];
        for s in &self.set {
            let (k, v) = s.split_once('=').ok_or_else(|| format!("--set expects KEY=VALUE, got {s:?}"))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                out.push((k.to_string(), v));
            }
        };
        push("greedy", self.greedy.then(|| "true".into()));
        push("beam", self.beam.map(|v| v.to_string()));
        push("threshold", self.threshold.map(|v| v.to_string()));
        push("seed", self.seed.map(|v| v.to_string()));
        push("mode", self.mode.clone());
        push("epochs", self.epochs.map(|v| v.to_string()));
        push("vocab_dir", self.vocab_dir.clone());
        push("output_dir", self.output_dir.clone());
        push("output", self.output.clone());
        push("input", self.input.clone());
        push("checkpoint", self.checkpoint.clone());
        push("checkpoints", self.checkpoints.clone());
        push("parser_init", self.parser_init.clone());
        Ok(out)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let pairs = match cli.overrides.pairs() {
        Ok(p) => p,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(1);
        }
    };
    let env_seed = std::env::var("LGPNMT_SEED").ok();
    let result = RunConfig::resolve(cli.overrides.config.as_deref(), env_seed.as_deref(), &pairs).and_then(|cfg| {
        print!("{}", cfg.to_text());
        app::run(cli.command.command(), &cfg)
    });
    match result {
        Ok(report) => {
            for (k, v) in &report.metrics {
                println!("{k}\t{v}");
            }
            for f in &report.files {
                log::info!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
