//! Kendall's-tau ranking loss for logit distillation.
//!
//! The crate is organized in four layers:
//!
//! - [`numeric`]: logit/probability vector types, temperature softmax,
//!   z-score normalization, and a central finite-difference oracle.
//! - [`losses`]: forward values and hand-derived analytic gradients for the
//!   KL distillation loss, cross-entropy, and the differentiable Kendall-tau
//!   ranking loss (all four forms, channel subsets, input normalization).
//! - [`nn`]: a minimal fully-connected network with explicit forward/backward
//!   passes, momentum SGD, and a binary checkpoint format.
//! - [`distill`]: synthetic dataset generation, teacher training, student
//!   distillation, evaluation, and ablation sweeps, with CSV metrics output.
//!
//! Everything is `f64`, deterministic under fixed seeds, and free of shared
//! mutable state; all loss/gradient functions are pure.

pub mod distill;
pub mod losses;
pub mod nn;
pub mod numeric;

use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An input vector contained NaN or infinity.
    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    /// A scalar parameter was outside its valid range.
    #[error("invalid parameter {name}: {message}")]
    InvalidParameter { name: &'static str, message: String },

    /// Two vectors that must share a length did not.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    /// A class label referenced a channel that does not exist.
    #[error("label {label} out of range for {channels} channels")]
    LabelOutOfRange { label: usize, channels: usize },

    /// A configuration was structurally invalid.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// The finite-difference oracle hit a non-finite function evaluation.
    #[error("finite-difference oracle failed: {0}")]
    Oracle(String),

    /// Training produced a non-finite loss.
    #[error("training diverged at epoch {epoch}: {message}")]
    TrainingDiverged { epoch: usize, message: String },

    /// A checkpoint could not be read or does not match the expected shape.
    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),

    /// A sweep sub-run failed; the offending axis value is named.
    #[error("sweep failed at {axis}={value}: {source}")]
    SweepFailed {
        axis: String,
        value: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
