use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const UNK: &str = "<unk>";
pub const EOS: &str = "<eos>";
pub const UNK_ID: usize = 0;
pub const EOS_ID: usize = 1;

/// Token ↔ id map with reserved `UNK` (id 0) and `EOS` (id 1).
///
/// Remaining ids are assigned by descending corpus frequency, ties broken
/// lexicographically.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn build<I, S, T>(sequences: I, min_frequency: usize) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: IntoIterator<Item = T>,
        T: AsRef<str>,
    {
        if min_frequency == 0 {
            return Err(Error::Config("min_frequency must be at least 1".into()));
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        let mut seen_any = false;
        for seq in sequences {
            for tok in seq {
                seen_any = true;
                let tok = tok.as_ref();
                if tok == UNK || tok == EOS {
                    continue;
                }
                *counts.entry(tok.to_owned()).or_default() += 1;
            }
        }
        if !seen_any {
            return Err(Error::EmptyCorpus);
        }
        let mut kept: Vec<(String, usize)> = counts.into_iter().filter(|(_, c)| *c >= min_frequency).collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ok(Self::from_tokens(kept.into_iter().map(|(t, _)| t)))
    }

    /// Vocabulary from an ordered token list (reserved entries are prepended).
    pub fn from_tokens<I: IntoIterator<Item = String>>(tokens: I) -> Self {
        let mut all = vec![UNK.to_owned(), EOS.to_owned()];
        all.extend(tokens.into_iter().filter(|t| t != UNK && t != EOS));
        let index = all.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary { tokens: all, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Id of `token`, or `UNK_ID` when it is not in the vocabulary.
    pub fn id(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// FNV-1a over the newline-joined token list.
    pub fn content_hash(&self) -> u64 {
        content_hash(&self.tokens)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in &self.tokens {
            let _ = writeln!(out, "{t}");
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let lines: Vec<&str> = text.lines().collect();
        if lines.len() < 2 || lines[0] != UNK || lines[1] != EOS {
            return Err(Error::parse(
                path.display().to_string(),
                format!("vocabulary must start with {UNK} and {EOS}"),
            ));
        }
        let vocab = Self::from_tokens(lines[2..].iter().map(|s| s.to_string()));
        if vocab.len() != lines.len() {
            return Err(Error::parse(path.display().to_string(), "duplicate vocabulary entry"));
        }
        Ok(vocab)
    }
}

pub(crate) fn content_hash<S: AsRef<str>>(items: &[S]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for item in items {
        for b in item.as_ref().bytes().chain(std::iter::once(b'\n')) {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

/// Closed inventory of POS tags or dependency labels (no UNK entry).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelSet {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelSet {
    /// Sorted, de-duplicated label inventory.
    pub fn new<I: IntoIterator<Item = S>, S: AsRef<str>>(labels: I) -> Self {
        let mut names: Vec<String> = labels.into_iter().map(|s| s.as_ref().to_owned()).collect();
        names.sort();
        names.dedup();
        let index = names.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        LabelSet { names, index }
    }

    /// Placeholder inventory `L0..L{n-1}` for models never shown a treebank.
    pub fn anonymous(prefix: &str, n: usize) -> Self {
        let names: Vec<String> = (0..n).map(|i| format!("{prefix}{i}")).collect();
        let index = names.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        LabelSet { names, index }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for n in &self.names {
            let _ = writeln!(out, "{n}");
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let names: Vec<String> = text.lines().filter(|l| !l.is_empty()).map(str::to_owned).collect();
        let index = names.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Ok(LabelSet { names, index })
    }
}

/// Contiguous character n-grams of `word` for each order in `orders`.
///
/// No boundary markers are added; orders longer than the word contribute nothing.
pub fn char_ngrams(word: &str, orders: &[usize]) -> Vec<String> {
    let chars: Vec<char> = word.chars().collect();
    let mut out = Vec::new();
    for &n in orders {
        if n == 0 || n > chars.len() {
            continue;
        }
        for window in chars.windows(n) {
            out.push(window.iter().collect());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn split(lines: &[&str]) -> Vec<Vec<String>> {
        lines.iter().map(|l| l.split_whitespace().map(str::to_owned).collect()).collect()
    }

    #[test]
    fn cutoff_maps_rare_words_to_unk() {
        let v = Vocabulary::build(split(&["a a b"]), 2).unwrap();
        assert_eq!(v.tokens(), &[UNK, EOS, "a"]);
        assert_eq!(v.id("b"), UNK_ID);
    }

    #[test]
    fn min_frequency_one_keeps_everything() {
        let v = Vocabulary::build(split(&["x y", "x"]), 1).unwrap();
        assert_eq!(v.tokens(), &[UNK, EOS, "x", "y"]);
    }

    #[test]
    fn frequency_ties_break_lexicographically() {
        let v = Vocabulary::build(split(&["c c b b a"]), 2).unwrap();
        assert_eq!(v.id("b"), 2);
        assert_eq!(v.id("c"), 3);
    }

    #[test]
    fn empty_corpus_is_error() {
        assert!(matches!(Vocabulary::build(Vec::<Vec<String>>::new(), 1), Err(Error::EmptyCorpus)));
        assert!(Vocabulary::build(split(&["a"]), 0).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let v = Vocabulary::build(split(&["the cat sat on the mat"]), 1).unwrap();
        let p = dir.path().join("v.vocab");
        v.save(&p).unwrap();
        let back = Vocabulary::load(&p).unwrap();
        assert_eq!(v, back);
        assert_eq!(v.content_hash(), back.content_hash());
        std::fs::write(&p, "a\nb\n").unwrap();
        assert!(Vocabulary::load(&p).is_err());
    }

    #[test]
    fn ngram_examples() {
        assert_eq!(char_ngrams("cat", &[2, 3, 4]), vec!["ca", "at", "cat"]);
        assert_eq!(char_ngrams("ab", &[2, 3, 4]), vec!["ab"]);
        assert!(char_ngrams("a", &[2, 3, 4]).is_empty());
        assert_eq!(char_ngrams("née", &[2]), vec!["né", "ée"]);
    }

    #[test]
    fn label_sets_are_sorted() {
        let l = LabelSet::new(["nsubj", "det", "nsubj", "root"]);
        assert_eq!(l.names(), &["det", "nsubj", "root"]);
        assert_eq!(l.get("root"), Some(2));
        assert_eq!(l.get("amod"), None);
    }

    proptest! {
        #[test]
        fn id_token_round_trip(words in prop::collection::vec("[a-e]{1,3}", 1..40)) {
            let v = Vocabulary::build([words.clone()], 1).unwrap();
            for id in 0..v.len() {
                prop_assert_eq!(v.id(v.token(id)), id);
            }
        }

        #[test]
        fn ngram_count(word in "[a-z]{1,12}") {
            let n = word.chars().count();
            let want: usize = [2usize, 3, 4].iter().map(|&k| (n + 1).saturating_sub(k)).sum();
            prop_assert_eq!(char_ngrams(&word, &[2, 3, 4]).len(), want);
        }
    }
}
