use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::ParallelPair;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Smoothing {
    None,
    /// Add-one over every target length in `1..=support_max`.
    #[default]
    AddOne,
}

/// Conditional target-length distribution `p(L_y | L_x)` from training pairs.
///
/// Lengths count words, without `EOS`. Unseen source lengths fall back to the
/// uniform distribution over `1..=support_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct LengthStats {
    counts: BTreeMap<usize, BTreeMap<usize, u64>>,
    support_max: usize,
    smoothing: Smoothing,
}

impl LengthStats {
    pub fn from_pairs(pairs: &[ParallelPair], smoothing: Smoothing) -> Result<Self> {
        Self::from_lengths(pairs.iter().map(|p| (p.source.len(), p.target.len())), smoothing)
    }

    pub fn from_lengths<I: IntoIterator<Item = (usize, usize)>>(lengths: I, smoothing: Smoothing) -> Result<Self> {
        let mut counts: BTreeMap<usize, BTreeMap<usize, u64>> = BTreeMap::new();
        let mut support_max = 0;
        for (lx, ly) in lengths {
            if ly == 0 {
                return Err(Error::Invalid("target length 0".into()));
            }
            *counts.entry(lx).or_default().entry(ly).or_default() += 1;
            support_max = support_max.max(ly);
        }
        if counts.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        Ok(LengthStats { counts, support_max, smoothing })
    }

    /// Widens the target-length support to at least `max_len`.
    pub fn with_support_max(mut self, max_len: usize) -> Self {
        self.support_max = self.support_max.max(max_len);
        self
    }

    pub fn with_smoothing(mut self, smoothing: Smoothing) -> Self {
        self.smoothing = smoothing;
        self
    }

    pub fn support_max(&self) -> usize {
        self.support_max
    }

    pub fn smoothing(&self) -> Smoothing {
        self.smoothing
    }

    pub fn prob(&self, lx: usize, ly: usize) -> f64 {
        if ly == 0 || ly > self.support_max {
            return 0.0;
        }
        let Some(row) = self.counts.get(&lx) else {
            return 1.0 / self.support_max as f64;
        };
        let total: u64 = row.values().sum();
        let c = row.get(&ly).copied().unwrap_or(0);
        match self.smoothing {
            Smoothing::None => c as f64 / total as f64,
            Smoothing::AddOne => (c + 1) as f64 / (total + self.support_max as u64) as f64,
        }
    }

    pub fn log_prob(&self, lx: usize, ly: usize) -> f64 {
        self.prob(lx, ly).ln()
    }

    pub fn observed_source_lengths(&self) -> impl Iterator<Item = usize> + '_ {
        self.counts.keys().copied()
    }

    /// `support\tM` header, then `L_x\tL_y\tcount` rows.
    pub fn to_text(&self) -> String {
        let mut out = format!("support\t{}\n", self.support_max);
        for (lx, row) in &self.counts {
            for (ly, c) in row {
                let _ = writeln!(out, "{lx}\t{ly}\t{c}");
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, smoothing: Smoothing) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let loc = |i: usize| format!("{}:{}", path.display(), i + 1);
        let mut lines = text.lines().enumerate();
        let support = match lines.next() {
            Some((_, l)) if l.starts_with("support\t") => l[8..]
                .parse::<usize>()
                .map_err(|_| Error::parse(loc(0), "bad support line"))?,
            _ => return Err(Error::parse(loc(0), "missing support header")),
        };
        let mut rows = Vec::new();
        for (i, line) in lines {
            let f: Vec<&str> = line.split('\t').collect();
            let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::parse(loc(i), "expected integers"));
            if f.len() != 3 {
                return Err(Error::parse(loc(i), "expected L_x, L_y, count"));
            }
            let (lx, ly, c) = (parse(f[0])?, parse(f[1])?, parse(f[2])?);
            rows.extend(std::iter::repeat_n((lx, ly), c));
        }
        Ok(Self::from_lengths(rows, smoothing)?.with_support_max(support))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_pair() {
        let s = LengthStats::from_lengths([(3, 4)], Smoothing::None).unwrap();
        assert_eq!(s.prob(3, 4), 1.0);
    }

    #[test]
    fn two_pairs_split_mass() {
        let s = LengthStats::from_lengths([(3, 4), (3, 6)], Smoothing::None).unwrap();
        assert_eq!(s.prob(3, 4), 0.5);
        assert_eq!(s.prob(3, 6), 0.5);
        assert_eq!(s.prob(3, 5), 0.0);
    }

    #[test]
    fn unseen_source_length_is_uniform() {
        let s = LengthStats::from_lengths([(3, 4), (3, 6)], Smoothing::None).unwrap();
        for ly in 1..=6 {
            assert_eq!(s.prob(9, ly), 1.0 / 6.0);
        }
        assert_eq!(s.prob(9, 7), 0.0);
    }

    #[test]
    fn add_one_keeps_every_length_finite() {
        let s = LengthStats::from_lengths([(3, 4), (3, 6)], Smoothing::AddOne).unwrap().with_support_max(10);
        for ly in 1..=10 {
            assert!(s.log_prob(3, ly).is_finite());
        }
        assert_eq!(s.prob(3, 4), 2.0 / 12.0);
    }

    #[test]
    fn text_round_trip() {
        let d = tempfile::tempdir().unwrap();
        let s = LengthStats::from_lengths([(3, 4), (3, 6), (2, 2)], Smoothing::AddOne).unwrap().with_support_max(50);
        let p = d.path().join("lengths.tsv");
        s.save(&p).unwrap();
        assert_eq!(LengthStats::load(&p, Smoothing::AddOne).unwrap(), s);
    }

    proptest! {
        #[test]
        fn rows_are_distributions(
            lens in prop::collection::vec((1usize..8, 1usize..8), 1..30),
            smooth in any::<bool>(),
            query in 1usize..10,
        ) {
            let sm = if smooth { Smoothing::AddOne } else { Smoothing::None };
            let s = LengthStats::from_lengths(lens, sm).unwrap();
            let total: f64 = (1..=s.support_max()).map(|ly| s.prob(query, ly)).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
        }
    }
}
