//! Minimal differentiable-network substrate with hand-written backward rules.

mod adam;
pub mod checkpoint;
pub mod gradcheck;
mod layers;
mod matrix;
mod scalar;
mod sequential;

use thiserror::Error;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{Checkpoint, CheckpointError};
pub use gradcheck::{finite_difference_check, GradCheckReport};
pub use layers::{max_pool, max_pool_backward, Dense, Layer, Param};
pub use matrix::{matmul, matmul_into, Matrix};
pub use scalar::Scalar;
pub use sequential::{Sequential, Trace};

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("empty input")]
    EmptyInput,
    #[error("non-finite value in input")]
    NonFinite,
}
