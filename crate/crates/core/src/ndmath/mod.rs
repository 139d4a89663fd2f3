//! Deterministic dense math with reverse-mode differentiation.

mod adamw;
mod gradcheck;
mod graph;
mod tensor;

pub use adamw::{adamw_step, AdamWConfig, AdamWState};
pub use gradcheck::{check_op, grad_check, grad_check_with_fault, vjp_check, GradCheck, FD_STEP};
pub use graph::{Graph, NodeId, OpKind, MIN_NORM};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MathError {
    #[error("{op}: dimension mismatch between {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("target {index} out of range for {bound} classes")]
    Index { index: usize, bound: usize },
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
}
