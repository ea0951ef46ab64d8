//! Python bindings: configuration, the command runner, decoding and metrics.

use std::path::{Path, PathBuf};

use lgpnmt_core::app::{self, Command, RunConfig};
use lgpnmt_core::corpus::{tokenize, LengthStats, Smoothing, Vocabularies};
use lgpnmt_core::eval::{self, DependencyTree};
use lgpnmt_core::model::Model;
use lgpnmt_core::search::{beam_search, greedy, replace_unknowns, ModelSession};
use lgpnmt_core::trainer::Checkpoint;
use lgpnmt_core::{toy, Error};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        Error::Config(_) | Error::Parse { .. } | Error::Invalid(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Resolved run configuration.
#[pyclass(name = "Config", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyConfig {
    /// Defaults, then `path` (if given), then `overrides` in order.
    #[new]
    #[pyo3(signature = (path=None, overrides=None))]
    fn new(path: Option<PathBuf>, overrides: Option<Vec<(String, String)>>) -> PyResult<Self> {
        let inner = RunConfig::resolve(path.as_deref(), None, &overrides.unwrap_or_default()).map_err(py_err)?;
        Ok(PyConfig { inner })
    }

    /// Relative paths resolve against the working directory.
    fn set(&mut self, key: &str, value: &str) -> PyResult<()> {
        self.inner.set(key, value, Path::new("")).map_err(py_err)
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn __repr__(&self) -> String {
        format!("Config(mode={}, seed={})", self.inner.mode, self.inner.train.seed)
    }
}

/// Runs one pipeline command and returns `(files, metrics)`.
#[pyfunction]
fn run(py: Python<'_>, command: &str, config: &PyConfig) -> PyResult<(Vec<PathBuf>, Vec<(String, f64)>)> {
    let cmd: Command = command.parse().map_err(py_err)?;
    let cfg = config.inner.clone();
    let report = py.detach(move || app::run(cmd, &cfg)).map_err(py_err)?;
    Ok((report.files, report.metrics.into_iter().collect()))
}

/// A trained checkpoint paired with its vocabulary directory.
#[pyclass]
struct Translator {
    model: Model<f32>,
    vocabs: Vocabularies,
    lengths: Option<LengthStats>,
}

#[pymethods]
impl Translator {
    #[new]
    fn new(checkpoint: PathBuf, vocab_dir: PathBuf) -> PyResult<Self> {
        let vocabs = Vocabularies::load(&vocab_dir).map_err(py_err)?;
        let model = Checkpoint::load(&checkpoint).and_then(Checkpoint::into_model).map_err(py_err)?;
        model.check_vocabularies(&vocabs).map_err(py_err)?;
        let stats = vocab_dir.join("lengths.tsv");
        let lengths = if stats.exists() { Some(LengthStats::load(&stats, Smoothing::AddOne).map_err(py_err)?) } else { None };
        Ok(Translator { model, vocabs, lengths })
    }

    #[getter]
    fn mode(&self) -> String {
        self.model.mode().to_string()
    }

    /// Beam search unless `beam == 1`; unknown outputs copy their most attended source word.
    #[pyo3(signature = (sentence, beam=12, max_len=100))]
    fn translate(&self, py: Python<'_>, sentence: &str, beam: usize, max_len: usize) -> PyResult<String> {
        let tokens = tokenize(sentence);
        py.detach(|| {
            let source = self.vocabs.encode_source(&tokens);
            let mut session = ModelSession::new(&self.model, &source, None)?;
            let t = if beam == 1 {
                greedy(&mut session, max_len)?
            } else {
                beam_search(&mut session, beam, max_len, tokens.len(), self.lengths.as_ref())?
            };
            let words = self.vocabs.decode_target(&t.tokens);
            Ok(replace_unknowns(&words, &t.attention, &tokens, None).join(" "))
        })
        .map_err(py_err)
    }

    /// Head probabilities (`N` rows, ROOT last) and label probabilities for `sentence`.
    fn latent_graph(&self, sentence: &str) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let source = self.vocabs.encode_source(&tokenize(sentence));
        let g = ModelSession::new(&self.model, &source, None).map_err(py_err)?.latent_graph();
        Ok((g.head_probs, g.label_probs))
    }
}

/// Corpus BLEU on whitespace-tokenised strings: `(score, brevity_penalty)`.
#[pyfunction]
#[pyo3(signature = (hypotheses, references, smooth=false))]
fn bleu(hypotheses: Vec<String>, references: Vec<String>, smooth: bool) -> PyResult<(f64, f64)> {
    let h: Vec<Vec<String>> = hypotheses.iter().map(|s| tokenize(s)).collect();
    let r: Vec<Vec<String>> = references.iter().map(|s| tokenize(s)).collect();
    let b = eval::bleu(&h, &r, 4, smooth).map_err(py_err)?;
    Ok((b.score, b.brevity_penalty))
}

/// Highest-scoring projective tree; heads are 1-based with 0 for ROOT.
#[pyfunction]
fn eisner(head_probs: Vec<Vec<f64>>) -> PyResult<Vec<usize>> {
    eval::eisner_decode(&head_probs).map(|t| t.heads).map_err(py_err)
}

/// Percentage of words whose predicted head matches the gold one.
#[pyfunction]
fn uas(predicted: Vec<Vec<usize>>, gold: Vec<Vec<usize>>) -> PyResult<f64> {
    let p: Vec<DependencyTree> = predicted.into_iter().map(DependencyTree::new).collect();
    let g: Vec<DependencyTree> = gold.into_iter().map(DependencyTree::new).collect();
    eval::uas(&p, &g).map_err(py_err)
}

/// Writes the synthetic reversal corpus used by the examples and tests.
#[pyfunction]
#[pyo3(signature = (directory, seed=1))]
fn generate_toy(directory: PathBuf, seed: u64) -> PyResult<()> {
    toy::generate(seed).write(&directory).map_err(py_err)
}

#[pymodule]
fn lgpnmt(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<Translator>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(bleu, m)?)?;
    m.add_function(wrap_pyfunction!(eisner, m)?)?;
    m.add_function(wrap_pyfunction!(uas, m)?)?;
    m.add_function(wrap_pyfunction!(generate_toy, m)?)?;
    Ok(())
}
