//! Dense networks with hand-written reverse-mode gradients, the Adam
//! optimizer and the Gaussian actor-critic used by the PPO learner.
//! Everything is f64 and single-threaded per network.

mod actor_critic;
mod adam;
pub mod gaussian;
mod layers;
mod matrix;

use thiserror::Error;

pub use actor_critic::{
    ActorCritic, ActorCriticSpec, Checkpoint, OutputGrads, PolicyOutput, Tensor, CHECKPOINT_FORMAT, LOG_STD_MAX,
    LOG_STD_MIN,
};
pub use adam::Adam;
pub use layers::{orthogonal, Activation, DenseStack, Mlp, StackCache};
pub use matrix::Matrix;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("non-finite network input")]
    NonFiniteInput,
    #[error("non-finite parameter")]
    NonFiniteParameter,
    #[error("backward called without a recorded forward pass")]
    NoForwardPass,
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub(crate) fn check_finite(m: &Matrix) -> Result<(), NnError> {
    if m.data().iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(NnError::NonFiniteInput)
    }
}
