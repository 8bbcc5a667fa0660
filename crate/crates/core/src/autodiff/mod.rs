//! Minimal reverse-mode differentiation over dense 2-D `f64` tensors, plus
//! Adam and a finite-difference gradient checker.

mod adam;
pub mod checkpoint;
mod gradcheck;
mod params;
mod tape;
mod tensor;

use std::path::PathBuf;

pub use adam::Adam;
pub use gradcheck::{grad_check, relative_error, GradCheckReport};
pub use params::{ParamId, ParamStore, Parameter};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("backward needs a 1x1 loss, got {0:?}")]
    NotAScalar((usize, usize)),
    #[error("{op}: index {index} out of range for {len} rows")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        len: usize,
    },
    #[error("{0} on an empty tensor")]
    Empty(&'static str),
    #[error("checkpoint line {line}: {reason}")]
    Checkpoint { line: usize, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
