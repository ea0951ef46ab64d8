//! A small synthetic corpus: the "translation" of a sentence is its words in
//! reverse order, upper-cased. A matching toy treebank gives the parser
//! something to pre-train on.

use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{write_conll, ParallelPair, TreebankSentence};
use crate::error::{Error, Result};

pub const WORDS: [&str; 20] = [
    "cat", "dog", "bird", "fish", "tree", "stone", "river", "cloud", "runs", "sees", "eats", "finds", "likes",
    "green", "small", "quick", "old", "red", "bright", "calm",
];

const TAGS: [&str; 20] = [
    "NOUN", "NOUN", "NOUN", "NOUN", "NOUN", "NOUN", "NOUN", "NOUN", "VERB", "VERB", "VERB", "VERB", "VERB", "ADJ",
    "ADJ", "ADJ", "ADJ", "ADJ", "ADJ", "ADJ",
];

pub const TRAIN_PAIRS: usize = 32;
pub const DEV_PAIRS: usize = 8;
pub const TREEBANK_SENTENCES: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct ToyData {
    pub train: Vec<ParallelPair>,
    pub dev: Vec<ParallelPair>,
    pub treebank: Vec<TreebankSentence>,
    /// Gold-style parses of the training and dev sources, for fixed-head training.
    pub train_parses: Vec<TreebankSentence>,
    pub dev_parses: Vec<TreebankSentence>,
}

pub fn translate(source: &[String]) -> Vec<String> {
    source.iter().rev().map(|w| w.to_uppercase()).collect()
}

/// Every word left of the root hangs on its right neighbour and every word
/// right of it on its left neighbour, so the tree is projective.
pub fn annotate(tokens: &[String], root: usize) -> TreebankSentence {
    let tag = |w: &str| WORDS.iter().position(|x| *x == w).map_or("X", |k| TAGS[k]).to_string();
    let n = tokens.len();
    let heads: Vec<usize> = (0..n)
        .map(|i| match i.cmp(&root) {
            std::cmp::Ordering::Less => i + 2,
            std::cmp::Ordering::Equal => 0,
            std::cmp::Ordering::Greater => i,
        })
        .collect();
    let labels = (0..n)
        .map(|i| match i.cmp(&root) {
            std::cmp::Ordering::Less => "mod",
            std::cmp::Ordering::Equal => "root",
            std::cmp::Ordering::Greater => "arg",
        })
        .map(str::to_string)
        .collect();
    TreebankSentence { tokens: tokens.to_vec(), pos: tokens.iter().map(|w| tag(w)).collect(), heads, labels }
}

fn sentence(rng: &mut ChaCha8Rng) -> Vec<String> {
    let n = rng.random_range(2..=6);
    (0..n).map(|_| WORDS.choose(rng).expect("non-empty").to_string()).collect()
}

/// Root is the first verb, or the middle word when there is none.
fn root_of(tokens: &[String]) -> usize {
    tokens
        .iter()
        .position(|w| WORDS.iter().position(|x| x == w).is_some_and(|k| TAGS[k] == "VERB"))
        .unwrap_or(tokens.len() / 2)
}

pub fn generate(seed: u64) -> ToyData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::HashSet::new();
    let mut sources = vec![];
    while sources.len() < TRAIN_PAIRS + DEV_PAIRS {
        let s = sentence(&mut rng);
        if seen.insert(s.clone()) {
            sources.push(s);
        }
    }
    let pair = |s: &Vec<String>| ParallelPair { source: s.clone(), target: translate(s) };
    let train: Vec<ParallelPair> = sources[..TRAIN_PAIRS].iter().map(pair).collect();
    let dev: Vec<ParallelPair> = sources[TRAIN_PAIRS..].iter().map(pair).collect();
    let treebank = sources[..TREEBANK_SENTENCES].iter().map(|s| annotate(s, root_of(s))).collect();
    let parse = |pairs: &[ParallelPair]| pairs.iter().map(|p| annotate(&p.source, root_of(&p.source))).collect();
    let (train_parses, dev_parses) = (parse(&train), parse(&dev));
    ToyData { train, dev, treebank, train_parses, dev_parses }
}

impl ToyData {
    /// Writes the corpus sides, the treebank and the source parses into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let side = |pairs: &[ParallelPair], src: bool| {
            pairs.iter().map(|p| if src { &p.source } else { &p.target }.join(" ") + "\n").collect::<String>()
        };
        let files = [
            ("train.src", side(&self.train, true)),
            ("train.tgt", side(&self.train, false)),
            ("dev.src", side(&self.dev, true)),
            ("dev.tgt", side(&self.dev, false)),
            ("treebank.conll", write_conll(&self.treebank)),
            ("train.conll", write_conll(&self.train_parses)),
            ("dev.conll", write_conll(&self.dev_parses)),
        ];
        for (name, text) in files {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_conll;
    use crate::eval::DependencyTree;

    #[test]
    fn reproducible_and_well_formed() {
        let a = generate(1);
        assert_eq!(a, generate(1));
        assert_eq!((a.train.len(), a.dev.len(), a.treebank.len()), (32, 8, 10));
        for p in a.train.iter().chain(&a.dev) {
            assert_eq!(p.source.len(), p.target.len());
            assert_eq!(p.target.last().unwrap(), &p.source[0].to_uppercase());
        }
        for s in a.treebank.iter().chain(&a.train_parses) {
            let t = DependencyTree::new(s.heads.clone());
            assert!(t.is_tree() && t.is_projective());
            assert_eq!(s.heads.iter().filter(|&&h| h == 0).count(), 1);
        }
        let text = write_conll(&a.treebank);
        assert_eq!(parse_conll(&text, "toy").unwrap(), a.treebank);
    }

    #[test]
    fn bundled_files_match_the_generator() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/toy");
        let tmp = tempfile::tempdir().unwrap();
        generate(1).write(tmp.path()).unwrap();
        for name in ["train.src", "train.tgt", "dev.src", "dev.tgt", "treebank.conll", "train.conll", "dev.conll"] {
            let want = std::fs::read_to_string(tmp.path().join(name)).unwrap();
            let got = std::fs::read_to_string(dir.join(name)).unwrap();
            assert_eq!(got, want, "{name}");
        }
    }
}
