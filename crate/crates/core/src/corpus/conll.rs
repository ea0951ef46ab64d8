use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// A gold-annotated sentence. `heads[i]` is 1-based, 0 meaning ROOT.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreebankSentence {
    pub tokens: Vec<String>,
    pub pos: Vec<String>,
    pub heads: Vec<usize>,
    pub labels: Vec<String>,
}

impl TreebankSentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

const ID: usize = 0;
const FORM: usize = 1;
const POS: usize = 4;
const HEAD: usize = 6;
const DEPREL: usize = 7;

pub fn read_conll(path: &Path) -> Result<Vec<TreebankSentence>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_conll(&text, &path.display().to_string())
}

/// Parses CoNLL-X rows (`ID FORM _ _ POS _ HEAD DEPREL ...`), tab separated,
/// sentences separated by blank lines. `#` comment lines and CoNLL-U
/// multiword/empty-node rows are skipped.
pub fn parse_conll(text: &str, source: &str) -> Result<Vec<TreebankSentence>> {
    let mut out = Vec::new();
    let mut cur = Builder::default();
    for (lineno, line) in text.lines().enumerate() {
        let loc = || format!("{source}:{}", lineno + 1);
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            if let Some(s) = cur.finish()? {
                out.push(s);
            }
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < DEPREL + 1 {
            return Err(Error::parse(loc(), format!("expected at least 8 columns, found {}", cols.len())));
        }
        if cols[ID].contains('-') || cols[ID].contains('.') {
            continue;
        }
        let id: usize = cols[ID].parse().map_err(|_| Error::parse(loc(), format!("bad token id {:?}", cols[ID])))?;
        if id != cur.tokens.len() + 1 {
            return Err(Error::parse(loc(), format!("token id {id} out of sequence")));
        }
        let head: usize = cols[HEAD]
            .parse()
            .map_err(|_| Error::parse(loc(), format!("non-integer head {:?}", cols[HEAD])))?;
        if head == id {
            return Err(Error::parse(loc(), format!("token {id} is its own head")));
        }
        cur.tokens.push(cols[FORM].to_owned());
        cur.pos.push(cols[POS].to_owned());
        cur.heads.push((head, lineno + 1));
        cur.labels.push(cols[DEPREL].to_owned());
    }
    if let Some(s) = cur.finish()? {
        out.push(s);
    }
    Ok(out)
}

#[derive(Default)]
struct Builder {
    tokens: Vec<String>,
    pos: Vec<String>,
    heads: Vec<(usize, usize)>,
    labels: Vec<String>,
}

impl Builder {
    fn finish(&mut self) -> Result<Option<TreebankSentence>> {
        if self.tokens.is_empty() {
            return Ok(None);
        }
        let n = self.tokens.len();
        let source_line = |l: usize| format!("line {l}");
        for &(h, line) in &self.heads {
            if h > n {
                return Err(Error::parse(source_line(line), format!("head {h} out of range for {n} tokens")));
            }
        }
        let b = std::mem::take(self);
        Ok(Some(TreebankSentence {
            tokens: b.tokens,
            pos: b.pos,
            heads: b.heads.into_iter().map(|(h, _)| h).collect(),
            labels: b.labels,
        }))
    }
}

pub fn write_conll(sentences: &[TreebankSentence]) -> String {
    let mut out = String::new();
    for s in sentences {
        for i in 0..s.len() {
            let _ = writeln!(
                out,
                "{}\t{}\t_\t_\t{}\t_\t{}\t{}\t_\t_",
                i + 1,
                s.tokens[i],
                s.pos[i],
                s.heads[i],
                s.labels[i]
            );
        }
        out.push('\n');
    }
    out
}
