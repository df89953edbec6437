//! Central finite-difference check of analytic gradients.

use crate::autodiff::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};

/// Coordinates where both gradients are smaller than this are compared
/// by absolute difference instead of relative error.
pub const ZERO_GRADIENT_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// (input index, coordinate) of the worst coordinate
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
}

fn scalar_value(g: &Graph, root: NodeId) -> Result<f64> {
    let v = g.value(root);
    if !v.is_scalar() {
        return Err(Error::NonScalarRoot(v.shape().to_vec()));
    }
    Ok(v.item())
}

/// Compares the reverse-mode gradient of `f` at `inputs` against central
/// differences with the given step and returns the worst coordinate.
pub fn grad_check_report<F>(f: F, inputs: &[Tensor], step: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    assert!(step > 0.0, "finite-difference step must be positive");
    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = values.iter().map(|t| g.leaf(t.clone())).collect();
        let root = f(&mut g, &ids)?;
        scalar_value(&g, root)
    };

    let mut g = Graph::new();
    let ids: Vec<NodeId> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let root = f(&mut g, &ids)?;
    let grads = g.backward(root)?;

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
    };
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (k, id) in ids.iter().enumerate() {
        let analytic = grads.get_or_zeros(*id, inputs[k].len());
        for j in 0..inputs[k].len() {
            let orig = inputs[k].data()[j];
            work[k].data_mut()[j] = orig + step;
            let plus = eval(&work)?;
            work[k].data_mut()[j] = orig - step;
            let minus = eval(&work)?;
            work[k].data_mut()[j] = orig;

            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic[j];
            let scale = a.abs().max(numeric.abs());
            let err = if scale < ZERO_GRADIENT_FLOOR {
                (a - numeric).abs()
            } else {
                (a - numeric).abs() / scale.max(1e-12)
            };
            if err > report.max_rel_error || err.is_nan() {
                report = GradCheckReport {
                    max_rel_error: err,
                    worst: (k, j),
                    analytic: a,
                    numeric,
                };
            }
        }
    }
    Ok(report)
}

/// Maximum relative error between analytic and central-difference gradients.
pub fn grad_check<F>(f: F, inputs: &[Tensor], step: f64) -> Result<f64>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    grad_check_report(f, inputs, step).map(|r| r.max_rel_error)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_quadratic() {
        let err = grad_check(
            |g, x| {
                let sq = g.square(x[0]);
                Ok(g.sum(sq))
            },
            &[Tensor::vector(vec![1.0, 2.0, 3.0])],
            1e-3,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn detects_a_wrong_gradient() {
        // max picks one coordinate; evaluating exactly at a tie makes the
        // one-sided rule disagree with the symmetric difference
        let err = grad_check(
            |g, x| Ok(g.max(x[0])),
            &[Tensor::vector(vec![1.0, 1.0])],
            1e-3,
        )
        .unwrap();
        assert!(err > 0.1);
    }

    #[test]
    fn zero_gradient_uses_absolute_comparison() {
        let err = grad_check(
            |g, x| {
                let s = g.softmax(x[0]);
                Ok(g.sum(s))
            },
            &[Tensor::vector(vec![0.1, 0.2, -0.3])],
            1e-3,
        )
        .unwrap();
        assert!(err < 1e-9, "{err}");
    }
}
