use std::collections::BTreeMap;
use std::fmt::Write;

use super::trees::DependencyTree;
use crate::model::LatentGraph;

pub const DEFAULT_DOT_THRESHOLD: f64 = 0.1;

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = k;
        }
    }
    best
}

/// Renders the head distributions of `graph` as a DOT digraph.
///
/// Each word gets an edge to every candidate head whose probability is at
/// least `threshold`, labelled with the weight and the word's most likely
/// dependency label.
pub fn export_dot<S: AsRef<str>>(graph: &LatentGraph, tokens: &[S], labels: &[String], threshold: f64) -> String {
    let n = graph.len();
    let mut out = String::from("digraph latent {\n  rankdir=LR;\n  ROOT [label=\"ROOT\", shape=box];\n");
    for i in 0..n {
        let name = tokens.get(i).map_or("?", |t| t.as_ref());
        let _ = writeln!(out, "  w{} [label={}];", i + 1, quote(name));
    }
    for (i, row) in graph.head_probs.iter().enumerate() {
        let label = graph
            .label_probs
            .get(i)
            .filter(|r| !r.is_empty())
            .map(|r| {
                let k = argmax(r);
                labels.get(k).cloned().unwrap_or_else(|| k.to_string())
            })
            .unwrap_or_default();
        for (k, &p) in row.iter().enumerate() {
            if k == i || p < threshold {
                continue;
            }
            let head = if k == n { "ROOT".to_string() } else { format!("w{}", k + 1) };
            let text = format!("{p:.3} {label}");
            let _ = writeln!(out, "  w{} -> {head} [label={}];", i + 1, quote(text.trim_end()));
        }
    }
    out.push_str("}\n");
    out
}

/// For predicted arcs that match gold arcs, the share of each gold label,
/// sorted by decreasing ratio then name.
pub fn dominant_labels<S: AsRef<str>>(
    predicted: &[DependencyTree],
    gold: &[(DependencyTree, Vec<S>)],
) -> Vec<(String, f64)> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for (p, (g, labels)) in predicted.iter().zip(gold) {
        for ((ph, gh), l) in p.heads.iter().zip(&g.heads).zip(labels) {
            if ph == gh {
                *counts.entry(l.as_ref()).or_insert(0) += 1;
            }
        }
    }
    let total: usize = counts.values().sum();
    let mut out: Vec<(String, f64)> =
        counts.into_iter().map(|(l, c)| (l.to_string(), c as f64 / total as f64)).collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}
