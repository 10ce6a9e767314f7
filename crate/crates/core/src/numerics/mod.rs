//! Dense tensors with reverse-mode automatic differentiation, parameter
//! storage, Adam, gradient checking and the checkpoint format.

mod adam;
pub mod checkpoint;
mod gradcheck;
mod graph;
mod params;
mod real;
mod tensor;

pub use adam::{warmup_lr, Adam};
pub use gradcheck::{grad_check, grad_check_shadowed, relative_error, GradCheckConfig, GradCheckReport, Objective};
pub use graph::{softmax_in_place, Gradients, Graph, Var, LAYER_NORM_EPS};
pub use params::{ParamId, Parameter, ParameterStore};
pub use real::Real;
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum NumericsError {
    #[error("invalid shape {0:?}: dimensions must be positive")]
    BadShape(Vec<usize>),
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("rows have different lengths")]
    Ragged,
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op}: expected rank {expected}, got shape {shape:?}")]
    Rank {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("{op}: index {index} out of bounds ({bound})")]
    OutOfBounds { op: &'static str, index: usize, bound: usize },
    #[error("{op}: non-finite value")]
    NonFinite { op: &'static str },
    #[error("layer_norm needs at least 2 features, got {0}")]
    DegenerateNorm(usize),
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("parameter '{0}' has no gradient for this step")]
    MissingGradient(String),
    #[error("unknown parameter '{0}'")]
    UnknownParameter(String),
    #[error("duplicate parameter '{0}'")]
    DuplicateParameter(String),
    #[error("objective is not deterministic: {first} vs {second}")]
    NonDeterministic { first: f64, second: f64 },
    #[error("finite-difference step {0} is out of range")]
    BadStep(f64),
    #[error("not a UKPC checkpoint")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
