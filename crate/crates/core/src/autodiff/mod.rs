//! Minimal reverse-mode differentiation over dense `f64` tensors.

mod gradcheck;
mod graph;
mod tensor;

pub use gradcheck::{grad_check, grad_check_report, GradCheckReport, ZERO_GRADIENT_FLOOR};
pub use graph::{Gradients, Graph, NodeId};
pub(crate) use graph::median_selection;
pub use tensor::Tensor;
