use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A requested extent was zero.
    ZeroExtent,
    ShapeMismatch {
        op: &'static str,
        expected: String,
        found: String,
    },
    /// An operation produced NaN or infinity.
    NonFinite { op: &'static str },
    /// `backward` called on a tensor with more than one element.
    NonScalarLoss { elements: usize },
    /// `backward` called on a value that does not depend on any tracked leaf.
    NoGradPath,
    EmptyInput(&'static str),
    ZeroNorm(&'static str),
    InvalidConfig(String),
    InvalidCost,
    /// Room cannot realise the requested reverberation time.
    Reverberation { t60: f64 },
    InsufficientPool { needed: usize, available: usize },
    SilentSource(usize),
    StateMismatch(&'static str),
    /// A named parameter is missing or has the wrong shape.
    Parameter {
        name: String,
        expected: String,
        found: String,
    },
    /// Training loss became non-finite.
    Diverged { epoch: usize, batch: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ZeroExtent => write!(f, "tensor extents must be positive"),
            Error::ShapeMismatch { op, expected, found } => {
                write!(f, "{op}: shape mismatch, expected {expected}, found {found}")
            }
            Error::NonFinite { op } => write!(f, "{op}: produced a non-finite value"),
            Error::NonScalarLoss { elements } => {
                write!(f, "backward needs a scalar loss, got {elements} elements")
            }
            Error::NoGradPath => write!(f, "loss does not depend on any tracked tensor"),
            Error::EmptyInput(what) => write!(f, "{what}: empty input"),
            Error::ZeroNorm(what) => write!(f, "{what}: zero-norm signal"),
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::InvalidCost => write!(f, "cost matrix must be square and finite"),
            Error::Reverberation { t60 } => {
                write!(f, "reverberation time {t60} s cannot be realised in this room")
            }
            Error::InsufficientPool { needed, available } => {
                write!(f, "source pool too small: need {needed}, have {available}")
            }
            Error::SilentSource(i) => write!(f, "source {i} has zero energy"),
            Error::StateMismatch(what) => write!(f, "stream state does not match model: {what}"),
            Error::Parameter { name, expected, found } => {
                write!(f, "parameter {name}: expected {expected}, found {found}")
            }
            Error::Diverged { epoch, batch } => {
                write!(f, "non-finite loss at epoch {epoch}, batch {batch}")
            }
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn shape_err(op: &'static str, expected: &[usize], found: &[usize]) -> Error {
    Error::ShapeMismatch {
        op,
        expected: alloc::format!("{expected:?}"),
        found: alloc::format!("{found:?}"),
    }
}
