//! Maximum likelihood, local variance, and global variance losses.
//!
//! Each loss exists as a graph builder (used in training) and as a
//! plain function over a [`DecodeTrace`]. Variances are taken around the
//! median, with population normalization over source positions, and are
//! computed on the unnormalized refined attention.

use crate::autodiff::{median_selection, Graph, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::model::PROB_FLOOR;

/// Stabilizer in `1 / (var + eps)`.
pub const DEFAULT_EPSILON: f64 = 1e-6;

/// Refined attention rows and gold-token log-probabilities of one example.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeTrace {
    /// `T x |D|`, each row nonnegative with sum in (0, 1]
    pub refined: Vec<Vec<f64>>,
    pub gold_log_probs: Vec<f64>,
}

impl DecodeTrace {
    pub fn new(refined: Vec<Vec<f64>>, gold_log_probs: Vec<f64>) -> Result<Self> {
        let width = refined.first().map(Vec::len).unwrap_or(0);
        if refined.is_empty() || width == 0 {
            return Err(Error::InvalidShape {
                what: "decode trace",
                shape: vec![refined.len(), width],
            });
        }
        if let Some(row) = refined.iter().find(|r| r.len() != width) {
            return Err(Error::ShapeMismatch {
                op: "decode trace",
                lhs: vec![width],
                rhs: vec![row.len()],
            });
        }
        Ok(Self {
            refined,
            gold_log_probs,
        })
    }

    /// Trace without gold probabilities (attention-only analysis).
    pub fn from_attention(refined: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(refined, Vec::new())
    }

    /// Gold probabilities are clamped at `1e-12` before the log.
    pub fn with_gold_probs(refined: Vec<Vec<f64>>, probs: &[f64]) -> Result<Self> {
        Self::new(refined, probs.iter().map(|p| p.max(PROB_FLOOR).ln()).collect())
    }

    pub fn steps(&self) -> usize {
        self.refined.len()
    }

    pub fn source_len(&self) -> usize {
        self.refined[0].len()
    }

    fn rows_as_nodes(&self, g: &mut Graph) -> Vec<NodeId> {
        self.refined
            .iter()
            .map(|r| g.leaf(Tensor::vector(r.clone())))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub mle: f64,
    pub local: f64,
    pub global: f64,
    pub total: f64,
    pub lambda_local: f64,
    pub lambda_global: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        [self.mle, self.local, self.global, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

// ---- plain-value definitions ------------------------------------------

/// Odd length: middle order statistic. Even length: mean of the two middle ones.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyMedian);
    }
    Ok(median_selection(values)
        .iter()
        .map(|&(i, w)| w * values[i])
        .sum())
}

/// `(1/n) sum_i (x_i - median(x))^2`
pub fn median_variance(values: &[f64]) -> Result<f64> {
    let m = median(values)?;
    Ok(values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64)
}

/// Per position: accumulated refined attention minus its largest single-step value.
pub fn global_gaps(refined: &[Vec<f64>]) -> Vec<f64> {
    let width = refined.first().map_or(0, Vec::len);
    (0..width)
        .map(|i| {
            let col = refined.iter().map(|r| r[i]);
            let total: f64 = col.clone().sum();
            let peak = col.fold(f64::NEG_INFINITY, f64::max);
            total - peak
        })
        .collect()
}

// ---- graph builders ---------------------------------------------------

fn median_variance_node(g: &mut Graph, x: NodeId) -> Result<NodeId> {
    let m = g.median(x)?;
    let centered = g.sub(x, m)?;
    let sq = g.square(centered);
    Ok(g.mean(sq))
}

/// `(1/T) sum_t 1 / (var(a^r_t) + eps)`
pub fn local_variance_node(g: &mut Graph, rows: &[NodeId], eps: f64) -> Result<NodeId> {
    let terms: Vec<NodeId> = rows
        .iter()
        .map(|&r| {
            let var = median_variance_node(g, r)?;
            let shifted = g.add_const(var, eps);
            Ok(g.recip(shifted))
        })
        .collect::<Result<_>>()?;
    let stacked = g.concat(&terms)?;
    Ok(g.mean(stacked))
}

/// Median-centered variance over positions of `g_i = sum_t a^r_ti - max_t a^r_ti`.
pub fn global_variance_node(g: &mut Graph, rows: &[NodeId]) -> Result<NodeId> {
    let m = g.stack(rows)?;
    let total = g.sum_rows(m)?;
    let peak = g.max_rows(m)?;
    let gaps = g.sub(total, peak)?;
    median_variance_node(g, gaps)
}

/// `-(1/T) sum_t log p(y_t*)` from per-step log-probability scalars.
pub fn mle_node(g: &mut Graph, gold_log_probs: &[NodeId]) -> Result<NodeId> {
    let lp = g.concat(gold_log_probs)?;
    let mean = g.mean(lp);
    Ok(g.scale(mean, -1.0))
}

/// Graph handles of the mixed objective and its parts.
#[derive(Debug, Clone, Copy)]
pub struct LossNodes {
    pub mle: NodeId,
    pub local: NodeId,
    pub global: NodeId,
    pub total: NodeId,
}

impl LossNodes {
    pub fn breakdown(&self, g: &Graph, lambda_local: f64, lambda_global: f64) -> LossBreakdown {
        LossBreakdown {
            mle: g.value(self.mle).item(),
            local: g.value(self.local).item(),
            global: g.value(self.global).item(),
            total: g.value(self.total).item(),
            lambda_local,
            lambda_global,
        }
    }
}

/// `L = L_MLE + lambda_local * L_L + lambda_global * L_G`
pub fn mixed_node(
    g: &mut Graph,
    gold_log_probs: &[NodeId],
    refined_rows: &[NodeId],
    lambda_local: f64,
    lambda_global: f64,
    eps: f64,
) -> Result<LossNodes> {
    if lambda_local < 0.0 || lambda_global < 0.0 {
        return Err(Error::Config("loss weights must be nonnegative".into()));
    }
    let mle = mle_node(g, gold_log_probs)?;
    let local = local_variance_node(g, refined_rows, eps)?;
    let global = global_variance_node(g, refined_rows)?;
    let wl = g.scale(local, lambda_local);
    let wg = g.scale(global, lambda_global);
    let partial = g.add(mle, wl)?;
    let total = g.add(partial, wg)?;
    Ok(LossNodes {
        mle,
        local,
        global,
        total,
    })
}

// ---- trace-level losses -------------------------------------------------

pub fn local_variance_loss(trace: &DecodeTrace, eps: f64) -> Result<f64> {
    let mut g = Graph::new();
    let rows = trace.rows_as_nodes(&mut g);
    let n = local_variance_node(&mut g, &rows, eps)?;
    Ok(g.value(n).item())
}

pub fn global_variance_loss(trace: &DecodeTrace) -> Result<f64> {
    let mut g = Graph::new();
    let rows = trace.rows_as_nodes(&mut g);
    let n = global_variance_node(&mut g, &rows)?;
    Ok(g.value(n).item())
}

pub fn mle_loss(trace: &DecodeTrace) -> Result<f64> {
    let mut g = Graph::new();
    let lps: Vec<NodeId> = trace.gold_log_probs.iter().map(|&v| g.scalar(v)).collect();
    let n = mle_node(&mut g, &lps)?;
    Ok(g.value(n).item())
}

pub fn mixed_loss(trace: &DecodeTrace, lambda_local: f64, lambda_global: f64, eps: f64) -> Result<LossBreakdown> {
    let mut g = Graph::new();
    let rows = trace.rows_as_nodes(&mut g);
    let lps: Vec<NodeId> = trace.gold_log_probs.iter().map(|&v| g.scalar(v)).collect();
    let nodes = mixed_node(&mut g, &lps, &rows, lambda_local, lambda_global, eps)?;
    Ok(nodes.breakdown(&g, lambda_local, lambda_global))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check_report;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    fn one_step(row: &[f64]) -> DecodeTrace {
        DecodeTrace::from_attention(vec![row.to_vec()]).unwrap()
    }

    #[test]
    fn median_examples() {
        assert_eq!(median(&[1.0, 2.0, 3.0]).unwrap(), 2.0);
        assert_eq!(median(&[1.0, 2.0, 3.0, 4.0]).unwrap(), 2.5);
        assert_eq!(median(&[5.0]).unwrap(), 5.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]).unwrap(), 2.5);
        assert!(matches!(median(&[]), Err(Error::EmptyMedian)));
    }

    #[test]
    fn local_variance_closed_forms() {
        let eps = DEFAULT_EPSILON;
        // one-hot over 4: median 0, var = 1/4
        let l = local_variance_loss(&one_step(&[1.0, 0.0, 0.0, 0.0]), eps).unwrap();
        assert!(rel(l, 1.0 / (0.25 + eps)) < 1e-12);
        assert!((l - 4.0).abs() < 1e-4);
        // flat: zero variance
        let l = local_variance_loss(&one_step(&[0.25; 4]), eps).unwrap();
        assert!(rel(l, 1e6) < 1e-9);
        // median 0.25, every deviation is 0.25
        let l = local_variance_loss(&one_step(&[0.5, 0.5, 0.0, 0.0]), eps).unwrap();
        assert!(rel(l, 1.0 / (0.0625 + eps)) < 1e-12);
        assert!((l - 16.0).abs() < 1e-2);
    }

    #[test]
    fn global_variance_closed_forms() {
        let t1 = one_step(&[0.1, 0.7, 0.2]);
        assert_eq!(global_variance_loss(&t1).unwrap(), 0.0);
        let repeated = DecodeTrace::from_attention(vec![vec![1.0, 0.0, 0.0, 0.0]; 2]).unwrap();
        assert_eq!(global_gaps(&repeated.refined), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(global_variance_loss(&repeated).unwrap(), 0.25);
        let distinct = DecodeTrace::from_attention(vec![vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 0.0]]).unwrap();
        assert_eq!(global_variance_loss(&distinct).unwrap(), 0.0);
    }

    #[test]
    fn mle_examples() {
        let rows = vec![vec![1.0]; 2];
        let t = DecodeTrace::with_gold_probs(rows.clone(), &[1.0, 1.0]).unwrap();
        assert_eq!(mle_loss(&t).unwrap(), 0.0);
        let t = DecodeTrace::with_gold_probs(vec![vec![1.0]; 3], &[0.125; 3]).unwrap();
        assert!((mle_loss(&t).unwrap() - 8f64.ln()).abs() < 1e-12);
        let t = DecodeTrace::with_gold_probs(rows, &[0.5, 0.25]).unwrap();
        assert!((mle_loss(&t).unwrap() - (2f64.ln() + 4f64.ln()) / 2.0).abs() < 1e-12);
        // clamped, finite
        let t = DecodeTrace::with_gold_probs(vec![vec![1.0]], &[0.0]).unwrap();
        assert!((mle_loss(&t).unwrap() - 1e-12f64.ln().abs()).abs() < 1e-9);
    }

    #[test]
    fn mixture_recombines() {
        let trace = DecodeTrace::with_gold_probs(
            vec![vec![0.6, 0.1, 0.2], vec![0.1, 0.5, 0.3]],
            &[0.4, 0.7],
        )
        .unwrap();
        let b = mixed_loss(&trace, 0.3, 0.1, DEFAULT_EPSILON).unwrap();
        assert_eq!(b.total, b.mle + b.lambda_local * b.local + b.lambda_global * b.global);
        let pre = mixed_loss(&trace, 0.0, 0.0, DEFAULT_EPSILON).unwrap();
        assert_eq!(pre.total, pre.mle);
        assert!(mixed_loss(&trace, -0.1, 0.0, DEFAULT_EPSILON).is_err());
    }

    #[test]
    fn mixture_arithmetic_example() {
        // components (2.0, 4.0, 0.25) at the default weights
        let total: f64 = 2.0 + 0.3 * 4.0 + 0.1 * 0.25;
        assert!((total - 3.225).abs() < 1e-12);
    }

    #[test]
    fn sharper_attention_has_smaller_local_loss() {
        let sharp = local_variance_loss(&one_step(&[1.0, 0.0, 0.0, 0.0]), DEFAULT_EPSILON).unwrap();
        let mid = local_variance_loss(&one_step(&[0.7, 0.1, 0.1, 0.1]), DEFAULT_EPSILON).unwrap();
        let flat = local_variance_loss(&one_step(&[0.25; 4]), DEFAULT_EPSILON).unwrap();
        assert!(sharp <= mid && mid <= flat);
    }

    fn random_rows(t: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..t)
            .map(|_| {
                let raw: Vec<f64> = (0..d).map(|_| rng.gen_range(0.05..1.0)).collect();
                let s: f64 = raw.iter().sum::<f64>() / rng.gen_range(0.5..1.0);
                raw.iter().map(|v| v / s).collect()
            })
            .collect()
    }

    #[test]
    fn losses_pass_grad_check() {
        for seed in 0..5 {
            let rows = random_rows(5, 7, seed);
            let inputs: Vec<Tensor> = rows.iter().map(|r| Tensor::vector(r.clone())).collect();
            let local = grad_check_report(|g, x| local_variance_node(g, x, DEFAULT_EPSILON), &inputs, 1e-6).unwrap();
            assert!(local.max_rel_error < 1e-4, "{local:?}");
            let global = grad_check_report(global_variance_node, &inputs, 1e-6).unwrap();
            assert!(global.max_rel_error < 1e-4, "{global:?}");
        }
    }

    #[test]
    fn graph_and_plain_definitions_agree() {
        for seed in 0..10 {
            let rows = random_rows(5, 7, seed);
            let trace = DecodeTrace::from_attention(rows.clone()).unwrap();
            let plain_local: f64 = rows
                .iter()
                .map(|r| 1.0 / (median_variance(r).unwrap() + DEFAULT_EPSILON))
                .sum::<f64>()
                / rows.len() as f64;
            let l = local_variance_loss(&trace, DEFAULT_EPSILON).unwrap();
            assert!((l - plain_local).abs() <= 1e-12 * plain_local);
            let plain_global = median_variance(&global_gaps(&rows)).unwrap();
            let gv = global_variance_loss(&trace).unwrap();
            assert!((gv - plain_global).abs() < 1e-15);
        }
    }

    #[test]
    fn unique_peaks_have_zero_global_loss() {
        // each position is attended in at most one step
        let rows = vec![
            vec![0.6, 0.4, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.9, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 0.3, 0.2],
        ];
        assert_eq!(global_variance_loss(&DecodeTrace::from_attention(rows).unwrap()).unwrap(), 0.0);
    }

    proptest! {
        #[test]
        fn local_loss_is_permutation_invariant(
            row in proptest::collection::vec(0.0f64..1.0, 2..10),
            seed in 0u64..1000,
        ) {
            use rand::seq::SliceRandom;
            let mut shuffled = row.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let a = local_variance_loss(&one_step(&row), DEFAULT_EPSILON).unwrap();
            let b = local_variance_loss(&one_step(&shuffled), DEFAULT_EPSILON).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.abs());
        }

        #[test]
        fn gaps_are_nonnegative(t in 1usize..6, d in 1usize..8, seed in 0u64..1000) {
            let rows = random_rows(t, d, seed);
            prop_assert!(global_gaps(&rows).iter().all(|&g| g >= 0.0));
        }
    }
}
