//! Crate-wide error type.

use alloc::string::String;
use core::fmt;

/// Error type shared by all modules.
#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// Operand shapes are incompatible for `op`.
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    /// A square matrix was required.
    NotSquare { rows: usize, cols: usize },
    /// Symmetry check failed (largest |a_ij − a_ji| reported).
    NotSymmetric { max_asymmetry: f64 },
    /// LU elimination hit a vanishing pivot.
    Singular { min_pivot: f64 },
    /// SPD factorization still failed at the jitter cap; carries the smallest
    /// diagonal pivot encountered.
    KernelSingular { min_pivot: f64 },
    /// Padé denominator was singular.
    PadeSingular { order: u8 },
    /// A network or task specification is invalid.
    InvalidSpec(String),
    /// A configuration field is out of range; the message carries the field path.
    InvalidConfig(String),
    /// Class label out of range for the given class count.
    InvalidLabel { label: usize, classes: usize },
    /// The loss kind cannot be used here (e.g. cross-entropy with one output).
    UnsupportedLoss(&'static str),
    /// A computation produced a non-finite value from finite inputs.
    NonFinite { what: &'static str },
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::Shape { op, lhs, rhs } => write!(
                f,
                "shape mismatch in {op}: {}x{} vs {}x{}",
                lhs.0, lhs.1, rhs.0, rhs.1
            ),
            CoreError::NotSquare { rows, cols } => {
                write!(f, "matrix must be square, got {rows}x{cols}")
            }
            CoreError::NotSymmetric { max_asymmetry } => {
                write!(f, "matrix is not symmetric (max |a_ij - a_ji| = {max_asymmetry:e})")
            }
            CoreError::Singular { min_pivot } => {
                write!(f, "singular matrix (min pivot {min_pivot:e})")
            }
            CoreError::KernelSingular { min_pivot } => write!(
                f,
                "kernel-singular: SPD factorization failed at the jitter cap \
                 (smallest diagonal pivot {min_pivot:e})"
            ),
            CoreError::PadeSingular { order } => write!(
                f,
                "pade-singular: order-{order} denominator is singular; \
                 scale the input down (scaling-and-squaring) and retry"
            ),
            CoreError::InvalidSpec(msg) => write!(f, "invalid spec: {msg}"),
            CoreError::InvalidConfig(msg) => write!(f, "invalid config: {msg}"),
            CoreError::InvalidLabel { label, classes } => {
                write!(f, "label {label} out of range for {classes} classes")
            }
            CoreError::UnsupportedLoss(msg) => write!(f, "unsupported loss: {msg}"),
            CoreError::NonFinite { what } => write!(f, "non-finite value in {what}"),
        }
    }
}

impl core::error::Error for CoreError {}

pub type Result<T> = core::result::Result<T, CoreError>;
