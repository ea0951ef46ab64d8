//! Corpus ingestion: parallel text, CoNLL treebanks, vocabularies and
//! target-length statistics.

mod conll;
mod lengths;
mod parallel;
mod vocab;

use std::path::Path;

pub use conll::{parse_conll, read_conll, write_conll, TreebankSentence};
pub use lengths::{LengthStats, Smoothing};
pub use parallel::{read_lines, read_parallel, tokenize, ParallelPair};
pub use vocab::{char_ngrams, LabelSet, Vocabulary, EOS, EOS_ID, UNK, UNK_ID};

use crate::error::{Error, Result};

pub const DEFAULT_NGRAM_ORDERS: [usize; 3] = [2, 3, 4];

/// A source sentence mapped to ids, with `EOS` appended as position `N+1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SourceSentence {
    pub tokens: Vec<String>,
    /// `N + 1` word ids, the last one `EOS_ID`.
    pub words: Vec<usize>,
    /// Character n-gram ids per position; never empty (falls back to `UNK_ID`).
    pub ngrams: Vec<Vec<usize>>,
}

impl SourceSentence {
    /// Number of real words `N`.
    pub fn len(&self) -> usize {
        self.words.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// The three vocabularies a model is built against.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabularies {
    pub source: Vocabulary,
    pub target: Vocabulary,
    pub ngram: Vocabulary,
    pub ngram_orders: Vec<usize>,
}

impl Vocabularies {
    /// Source words (and their n-grams) are counted over the source side plus
    /// any treebank forms, so a pre-trained parser shares the word table.
    pub fn build(
        pairs: &[ParallelPair],
        treebank: &[TreebankSentence],
        min_frequency: usize,
        ngram_orders: &[usize],
    ) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let source_side = || {
            pairs
                .iter()
                .map(|p| p.source.as_slice())
                .chain(treebank.iter().map(|s| s.tokens.as_slice()))
        };
        let source = Vocabulary::build(source_side(), min_frequency)?;
        let target = Vocabulary::build(pairs.iter().map(|p| p.target.as_slice()), min_frequency)?;
        // Corpora of one-character words have no n-grams at all.
        let ngram = match Vocabulary::build(
            source_side().map(|s| s.iter().flat_map(|w| char_ngrams(w, ngram_orders)).collect::<Vec<_>>()),
            min_frequency,
        ) {
            Err(Error::EmptyCorpus) => Vocabulary::from_tokens(Vec::new()),
            other => other?,
        };
        Ok(Vocabularies { source, target, ngram, ngram_orders: ngram_orders.to_vec() })
    }

    pub fn ngram_ids(&self, word: &str) -> Vec<usize> {
        let ids: Vec<usize> = char_ngrams(word, &self.ngram_orders).iter().map(|g| self.ngram.id(g)).collect();
        if ids.is_empty() {
            vec![UNK_ID]
        } else {
            ids
        }
    }

    pub fn encode_source<S: AsRef<str>>(&self, tokens: &[S]) -> SourceSentence {
        let mut words: Vec<usize> = tokens.iter().map(|t| self.source.id(t.as_ref())).collect();
        let mut ngrams: Vec<Vec<usize>> = tokens.iter().map(|t| self.ngram_ids(t.as_ref())).collect();
        words.push(EOS_ID);
        ngrams.push(vec![UNK_ID]);
        SourceSentence { tokens: tokens.iter().map(|t| t.as_ref().to_owned()).collect(), words, ngrams }
    }

    /// Target ids with `EOS` appended.
    pub fn encode_target<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        let mut ids: Vec<usize> = tokens.iter().map(|t| self.target.id(t.as_ref())).collect();
        ids.push(EOS_ID);
        ids
    }

    /// Target tokens up to (not including) the first `EOS`.
    pub fn decode_target(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().take_while(|&&i| i != EOS_ID).map(|&i| self.target.token(i).to_owned()).collect()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.source.save(&dir.join("source.vocab"))?;
        self.target.save(&dir.join("target.vocab"))?;
        self.ngram.save(&dir.join("ngram.vocab"))?;
        let orders: Vec<String> = self.ngram_orders.iter().map(|n| n.to_string()).collect();
        let p = dir.join("ngram.orders");
        std::fs::write(&p, orders.join(" ") + "\n").map_err(|e| Error::io(&p, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let p = dir.join("ngram.orders");
        let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        let ngram_orders = text
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| Error::parse(p.display().to_string(), "bad n-gram order")))
            .collect::<Result<Vec<usize>>>()?;
        Ok(Vocabularies {
            source: Vocabulary::load(&dir.join("source.vocab"))?,
            target: Vocabulary::load(&dir.join("target.vocab"))?,
            ngram: Vocabulary::load(&dir.join("ngram.vocab"))?,
            ngram_orders,
        })
    }
}

/// POS tag and dependency label inventories.
#[derive(Clone, Debug, PartialEq)]
pub struct TagSets {
    pub pos: LabelSet,
    pub labels: LabelSet,
}

impl TagSets {
    pub fn from_treebank(treebank: &[TreebankSentence]) -> Self {
        TagSets {
            pos: LabelSet::new(treebank.iter().flat_map(|s| s.pos.iter())),
            labels: LabelSet::new(treebank.iter().flat_map(|s| s.labels.iter())),
        }
    }

    pub fn anonymous(num_pos: usize, num_labels: usize) -> Self {
        TagSets { pos: LabelSet::anonymous("T", num_pos), labels: LabelSet::anonymous("L", num_labels) }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.pos.save(&dir.join("pos.labels"))?;
        self.labels.save(&dir.join("dep.labels"))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        Ok(TagSets { pos: LabelSet::load(&dir.join("pos.labels"))?, labels: LabelSet::load(&dir.join("dep.labels"))? })
    }

    pub fn exists(dir: &Path) -> bool {
        dir.join("pos.labels").exists() && dir.join("dep.labels").exists()
    }
}
