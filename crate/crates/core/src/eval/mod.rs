//! Metrics and analysis of latent graphs.

mod bleu;
mod graph;
mod trees;

use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::Path;

use rayon::prelude::*;

pub use bleu::{bleu, Bleu};
pub use graph::{dominant_labels, export_dot, DEFAULT_DOT_THRESHOLD};
pub use trees::{eisner_decode, tree_score, uas, DependencyTree, LOG_FLOOR};

use crate::corpus::SourceSentence;
use crate::error::{Error, Result};
use crate::model::{Example, GoldParse, LatentParser, Model, OutputLoss};
use crate::tensor::{ParamSet, Real, Tape};

/// Teacher-forced negative log-likelihood of one example (`EOS` included).
pub fn example_nll<T: Real>(model: &Model<T>, example: &Example) -> Result<f64> {
    let mut tape = Tape::new(&model.params);
    let loss = model.net.sequence_loss(
        &mut tape,
        &example.source,
        &example.target,
        example.parse.as_ref(),
        OutputLoss::Full,
        None,
    )?;
    Ok(tape.scalar(loss).f64())
}

/// `exp(total NLL / total target tokens)`, counting `EOS`.
pub fn perplexity<T: Real>(model: &Model<T>, examples: &[Example]) -> Result<f64> {
    let nll: Vec<f64> = examples.par_iter().map(|e| example_nll(model, e)).collect::<Result<_>>()?;
    let tokens: usize = examples.iter().map(|e| e.target.len()).sum();
    if tokens == 0 {
        return Err(Error::EmptyCorpus);
    }
    Ok((nll.iter().sum::<f64>() / tokens as f64).exp())
}

/// Eisner trees read off the parser's head distributions, one per sentence.
pub fn parser_trees<T: Real>(
    params: &ParamSet<T>,
    parser: &LatentParser,
    sentences: &[SourceSentence],
) -> Result<Vec<DependencyTree>> {
    sentences
        .par_iter()
        .map(|s| {
            let mut tape = Tape::new(params);
            eisner_decode(&parser.graph(&mut tape, s)?.head_probs)
        })
        .collect()
}

/// Unlabeled attachment score (percent) of the parser against gold heads.
pub fn parser_uas<T: Real>(
    params: &ParamSet<T>,
    parser: &LatentParser,
    treebank: &[(SourceSentence, GoldParse)],
) -> Result<f64> {
    let sentences: Vec<SourceSentence> = treebank.iter().map(|(s, _)| s.clone()).collect();
    let predicted = parser_trees(params, parser, &sentences)?;
    let gold: Vec<DependencyTree> = treebank.iter().map(|(_, g)| DependencyTree::new(g.heads.clone())).collect();
    uas(&predicted, &gold)
}

/// Writes `metric<TAB>value` lines and a JSON object with the same entries.
pub fn write_metrics(metrics: &BTreeMap<String, f64>, tsv: &Path, json: &Path) -> Result<()> {
    let mut text = String::new();
    for (k, v) in metrics {
        let _ = writeln!(text, "{k}\t{v}");
    }
    std::fs::write(tsv, text).map_err(|e| Error::io(tsv, e))?;
    let body = serde_json::to_string_pretty(metrics).map_err(|e| Error::Invalid(e.to_string()))?;
    std::fs::write(json, body + "\n").map_err(|e| Error::io(json, e))
}
