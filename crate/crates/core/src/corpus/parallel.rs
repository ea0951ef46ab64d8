use std::path::Path;

use crate::error::{Error, Result};

/// One source/target sentence pair, whitespace-tokenised, without `EOS`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParallelPair {
    pub source: Vec<String>,
    pub target: Vec<String>,
}

impl ParallelPair {
    pub fn new(source: &str, target: &str) -> Self {
        ParallelPair { source: tokenize(source), target: tokenize(target) }
    }
}

pub fn tokenize(line: &str) -> Vec<String> {
    line.split_whitespace().map(str::to_owned).collect()
}

pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(str::to_owned).collect())
}

/// Reads a line-aligned corpus and keeps pairs whose sides both have
/// between 1 and `max_len` tokens. Corpus order is preserved.
pub fn read_parallel(source: &Path, target: &Path, max_len: usize) -> Result<Vec<ParallelPair>> {
    let src = read_lines(source)?;
    let tgt = read_lines(target)?;
    if src.len() != tgt.len() {
        let line = src.len().min(tgt.len()) + 1;
        return Err(Error::parse(
            format!("{}:{line}", if src.len() < tgt.len() { source } else { target }.display()),
            format!("corpus files are not line-aligned ({} vs {} lines)", src.len(), tgt.len()),
        ));
    }
    let mut pairs = Vec::with_capacity(src.len());
    let mut dropped = 0usize;
    for (s, t) in src.iter().zip(&tgt) {
        let pair = ParallelPair::new(s, t);
        let ok = |n: usize| n >= 1 && n <= max_len;
        if ok(pair.source.len()) && ok(pair.target.len()) {
            pairs.push(pair);
        } else {
            dropped += 1;
        }
    }
    if dropped > 0 {
        log::info!("dropped {dropped} pairs outside 1..={max_len} tokens");
    }
    Ok(pairs)
}
