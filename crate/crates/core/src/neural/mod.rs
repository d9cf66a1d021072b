//! Dual-branch LSTM regression network with hand-written backpropagation.

mod checkpoint;
mod lstm;
mod matrix;
mod network;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use lstm::{Gate, LstmCellParams, LstmStep};
pub use matrix::Matrix;
pub use network::{DenseParams, Gradients, Mode, NetworkConfig, NetworkParams, Tape};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NeuralError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("tape was recorded against different parameters")]
    StaleTape,
    #[error("gradient contains a non-finite value")]
    NonFiniteGradient,
    #[error("learning rate must be positive and finite, got {0}")]
    InvalidLearningRate(f64),
    #[error("dropout probability must lie in [0, 1), got {0}")]
    InvalidDropout(f64),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
