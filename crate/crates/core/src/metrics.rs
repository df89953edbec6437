//! ROUGE-N / ROUGE-L F1, n-gram duplication rate, and attention statistics.

use std::collections::{HashMap, HashSet};
use std::hash::Hash;

use crate::error::Result;
use crate::losses::{global_gaps, median_variance, DecodeTrace};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    pub fn from_counts(overlap: usize, candidate: usize, reference: usize) -> Self {
        let ratio = |n: usize| if n == 0 { 0.0 } else { overlap as f64 / n as f64 };
        let (precision, recall) = (ratio(candidate), ratio(reference));
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
        }
    }
}

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram overlap.
pub fn rouge_n<T: Eq + Hash>(candidate: &[T], reference: &[T], n: usize) -> RougeScore {
    assert!(n >= 1, "n-gram order must be positive");
    let cand = ngram_counts(candidate, n);
    let refc = ngram_counts(reference, n);
    let overlap = cand
        .iter()
        .map(|(g, &c)| c.min(refc.get(g).copied().unwrap_or(0)))
        .sum();
    let total = |m: &HashMap<&[T], usize>| m.values().sum::<usize>();
    RougeScore::from_counts(overlap, total(&cand), total(&refc))
}

pub fn lcs_len<T: Eq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Longest-common-subsequence F1.
pub fn rouge_l<T: Eq>(candidate: &[T], reference: &[T]) -> RougeScore {
    RougeScore::from_counts(lcs_len(candidate, reference), candidate.len(), reference.len())
}

/// `1 - unique/total` over n-gram occurrences; 0 when shorter than `n`.
pub fn duplication_rate<T: Eq + Hash>(tokens: &[T], n: usize) -> f64 {
    assert!(n >= 1, "n-gram order must be positive");
    if tokens.len() < n {
        return 0.0;
    }
    let total = tokens.len() - n + 1;
    let unique: HashSet<&[T]> = tokens.windows(n).collect();
    1.0 - unique.len() as f64 / total as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionStats {
    /// median-centered variance of the refined attention, per step
    pub step_variance: Vec<f64>,
    /// mean gate value per step
    pub gate_mean: Vec<f64>,
    /// accumulated refined attention per position
    pub accumulated: Vec<f64>,
    /// accumulated minus peak refined attention per position
    pub gaps: Vec<f64>,
}

impl AttentionStats {
    pub fn mean_step_variance(&self) -> f64 {
        mean(&self.step_variance)
    }

    pub fn mean_gap(&self) -> f64 {
        mean(&self.gaps)
    }
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Summary of one example's refined attention; `gates` are the per-step
/// gate vectors (all ones when refinement is off).
pub fn attention_stats(trace: &DecodeTrace, gates: &[Vec<f64>]) -> Result<AttentionStats> {
    let step_variance = trace
        .refined
        .iter()
        .map(|r| median_variance(r))
        .collect::<Result<_>>()?;
    let width = trace.source_len();
    let accumulated = (0..width)
        .map(|i| trace.refined.iter().map(|r| r[i]).sum())
        .collect();
    Ok(AttentionStats {
        step_variance,
        gate_mean: gates.iter().map(|g| mean(g)).collect(),
        accumulated,
        gaps: global_gaps(&trace.refined),
    })
}
