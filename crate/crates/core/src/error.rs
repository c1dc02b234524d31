use alloc::string::String;

/// Errors raised by the transform, simulation and layer routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A transform length or matrix side is not an exact power of two.
    #[error("length {0} is not a power of two")]
    NotPowerOfTwo(usize),
    /// Two operands that must agree in length do not.
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    /// Tensor or matrix shapes are incompatible.
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// A prepared quantum state does not have unit norm.
    #[error("state is not normalized: norm {norm}")]
    NotNormalized { norm: f64 },
    /// Invalid configuration (zero shots, non-positive epsilon, bad probability).
    #[error("invalid configuration: {0}")]
    Config(String),
    /// A soft-threshold matrix contains a negative entry.
    #[error("threshold entries must be non-negative, found {0}")]
    NegativeThreshold(f64),
    /// A backward pass was given a cache that does not match its inputs.
    #[error("stale or mismatched cache: {0}")]
    Cache(String),
    /// A class label is outside the model's output range.
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
