use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised by the core library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("parameter `{0}` is already declared")]
    DuplicateParam(String),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("parameter `{0}` has a zero-size shape")]
    EmptyShape(String),
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("invalid acceleration window: {0}")]
    InvalidWindow(String),
    #[error("flip preprocessing applied to a right-hand window")]
    FlipOnRightHand,
    #[error("stream of {0} samples is shorter than one window")]
    StreamTooShort(usize),
    #[error("infeasible world spec: {0}")]
    InfeasibleSpec(String),
    #[error("unknown action sequence {0}")]
    UnknownSequence(usize),
    #[error("invalid split ratios: {0}")]
    InvalidRatios(String),
    #[error("cannot stratify split, intentions {0:?} have too few episodes")]
    Stratification(Vec<usize>),
    #[error("object token {token} out of range (n_objects = {n_objects})")]
    TokenOutOfRange { token: usize, n_objects: usize },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::ShapeMismatch {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }
}
