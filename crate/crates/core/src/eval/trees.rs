use crate::error::{Error, Result};

/// Lower bound applied to arc log-probabilities.
pub const LOG_FLOOR: f64 = -30.0;

/// Heads are 1-based with 0 for ROOT, one per word.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DependencyTree {
    pub heads: Vec<usize>,
}

impl DependencyTree {
    pub fn new(heads: Vec<usize>) -> Self {
        DependencyTree { heads }
    }

    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }

    /// Every word reaches ROOT without revisiting a node.
    pub fn is_tree(&self) -> bool {
        let n = self.heads.len();
        if self.heads.iter().enumerate().any(|(i, &h)| h > n || h == i + 1) {
            return false;
        }
        (1..=n).all(|start| {
            let mut node = start;
            for _ in 0..=n {
                if node == 0 {
                    return true;
                }
                node = self.heads[node - 1];
            }
            false
        })
    }

    /// No two arcs cross when ROOT is drawn at position 0.
    pub fn is_projective(&self) -> bool {
        let arcs: Vec<(usize, usize)> = self
            .heads
            .iter()
            .enumerate()
            .map(|(i, &h)| (h.min(i + 1), h.max(i + 1)))
            .collect();
        arcs.iter().all(|&(a, b)| arcs.iter().all(|&(c, d)| !(a < c && c < b && b < d)))
    }

    /// The one-hot head matrix (`N` rows over `N + 1` candidates, ROOT last).
    pub fn one_hot(&self) -> Vec<Vec<f64>> {
        let n = self.heads.len();
        self.heads
            .iter()
            .map(|&h| {
                let mut row = vec![0.0; n + 1];
                row[if h == 0 { n } else { h - 1 }] = 1.0;
                row
            })
            .collect()
    }
}

/// Log-probability of attaching word `d` to head `h` (both 1-based, 0 = ROOT).
fn arc_weight(head_probs: &[Vec<f64>], h: usize, d: usize) -> f64 {
    let n = head_probs.len();
    if h == d || d == 0 {
        return f64::NEG_INFINITY;
    }
    let p = head_probs[d - 1][if h == 0 { n } else { h - 1 }];
    p.ln().max(LOG_FLOOR)
}

/// Total floored log-probability of a tree under a head matrix.
pub fn tree_score(head_probs: &[Vec<f64>], tree: &DependencyTree) -> f64 {
    tree.heads.iter().enumerate().map(|(i, &h)| arc_weight(head_probs, h, i + 1)).sum()
}

/// Highest-scoring projective tree under log-probability arc weights.
///
/// `head_probs` has one row per word over the `N + 1` candidates, the last of
/// which is ROOT. ROOT may take several dependents.
pub fn eisner_decode(head_probs: &[Vec<f64>]) -> Result<DependencyTree> {
    let n = head_probs.len();
    if let Some(r) = head_probs.iter().position(|r| r.len() != n + 1) {
        return Err(Error::Shape(format!("row {r} of a {n}-word head matrix needs {} entries", n + 1)));
    }
    if n == 0 {
        return Ok(DependencyTree::new(vec![]));
    }
    let m = n + 1;
    let neg = f64::NEG_INFINITY;
    let idx = |s: usize, t: usize| s * m + t;
    // [0] = head on the right end, [1] = head on the left end.
    let mut complete = [vec![neg; m * m], vec![neg; m * m]];
    let mut incomplete = [vec![neg; m * m], vec![neg; m * m]];
    let mut split_c = [vec![0usize; m * m], vec![0usize; m * m]];
    let mut split_i = vec![0usize; m * m];
    for s in 0..m {
        complete[0][idx(s, s)] = 0.0;
        complete[1][idx(s, s)] = 0.0;
    }
    for k in 1..m {
        for s in 0..m - k {
            let t = s + k;
            let (mut best, mut arg) = (neg, s);
            for r in s..t {
                let v = complete[1][idx(s, r)] + complete[0][idx(r + 1, t)];
                if v > best {
                    best = v;
                    arg = r;
                }
            }
            split_i[idx(s, t)] = arg;
            incomplete[0][idx(s, t)] = best + arc_weight(head_probs, t, s);
            incomplete[1][idx(s, t)] = best + arc_weight(head_probs, s, t);

            let (mut best, mut arg) = (neg, s);
            for r in s..t {
                let v = complete[0][idx(s, r)] + incomplete[0][idx(r, t)];
                if v > best {
                    best = v;
                    arg = r;
                }
            }
            complete[0][idx(s, t)] = best;
            split_c[0][idx(s, t)] = arg;

            let (mut best, mut arg) = (neg, t);
            for r in s + 1..=t {
                let v = incomplete[1][idx(s, r)] + complete[1][idx(r, t)];
                if v > best {
                    best = v;
                    arg = r;
                }
            }
            complete[1][idx(s, t)] = best;
            split_c[1][idx(s, t)] = arg;
        }
    }
    if !complete[1][idx(0, n)].is_finite() {
        return Err(Error::NonFinite("no finite-scoring tree".into()));
    }

    enum Span {
        Complete(usize, usize, usize),
        Incomplete(usize, usize, usize),
    }
    let mut heads = vec![0usize; n];
    let mut stack = vec![Span::Complete(0, n, 1)];
    while let Some(span) = stack.pop() {
        match span {
            Span::Complete(s, t, dir) => {
                if s == t {
                    continue;
                }
                let r = split_c[dir][idx(s, t)];
                if dir == 0 {
                    stack.push(Span::Complete(s, r, 0));
                    stack.push(Span::Incomplete(r, t, 0));
                } else {
                    stack.push(Span::Incomplete(s, r, 1));
                    stack.push(Span::Complete(r, t, 1));
                }
            }
            Span::Incomplete(s, t, dir) => {
                if dir == 0 {
                    heads[s - 1] = t;
                } else {
                    heads[t - 1] = s;
                }
                let r = split_i[idx(s, t)];
                stack.push(Span::Complete(s, r, 1));
                stack.push(Span::Complete(r + 1, t, 0));
            }
        }
    }
    Ok(DependencyTree::new(heads))
}

/// Percentage of words whose predicted head equals the gold head.
pub fn uas(predicted: &[DependencyTree], gold: &[DependencyTree]) -> Result<f64> {
    if predicted.len() != gold.len() {
        return Err(Error::Invalid(format!("{} predicted trees for {} gold trees", predicted.len(), gold.len())));
    }
    let (mut correct, mut total) = (0usize, 0usize);
    for (k, (p, g)) in predicted.iter().zip(gold).enumerate() {
        if p.len() != g.len() {
            return Err(Error::Invalid(format!("sentence {k}: {} predicted heads for {} words", p.len(), g.len())));
        }
        correct += p.heads.iter().zip(&g.heads).filter(|(a, b)| a == b).count();
        total += g.len();
    }
    if total == 0 {
        return Err(Error::EmptyCorpus);
    }
    Ok(100.0 * correct as f64 / total as f64)
}
