use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A tensor extent did not match what the operation requires.
    ShapeMismatch {
        op: &'static str,
        dim: &'static str,
        expected: usize,
        found: usize,
    },
    DataLength {
        expected: usize,
        found: usize,
    },
    /// An operation would produce (or was asked for) a zero-sized extent.
    EmptyExtent {
        op: &'static str,
        dim: &'static str,
    },
    InvalidArgument {
        op: &'static str,
        reason: String,
    },
    MissingParam(String),
    /// A stored tensor that is absent, misshapen or not declared by the model.
    ParamMismatch(String),
    NonFinite {
        what: String,
    },
    Config(String),
}

impl Error {
    pub(crate) fn invalid(op: &'static str, reason: impl Into<String>) -> Self {
        Self::InvalidArgument {
            op,
            reason: reason.into(),
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ShapeMismatch {
                op,
                dim,
                expected,
                found,
            } => write!(
                f,
                "{op}: shape mismatch in {dim}: expected {expected}, found {found}"
            ),
            Self::DataLength { expected, found } => {
                write!(f, "tensor data length {found} does not match shape ({expected})")
            }
            Self::EmptyExtent { op, dim } => write!(f, "{op}: empty extent in {dim}"),
            Self::InvalidArgument { op, reason } => write!(f, "{op}: {reason}"),
            Self::MissingParam(name) => write!(f, "missing parameter `{name}`"),
            Self::ParamMismatch(name) => write!(f, "weights do not match the model at tensor `{name}`"),
            Self::NonFinite { what } => write!(f, "non-finite value in {what}"),
            Self::Config(msg) => write!(f, "invalid config: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn ensure_dim(
    op: &'static str,
    dim: &'static str,
    expected: usize,
    found: usize,
) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::ShapeMismatch {
            op,
            dim,
            expected,
            found,
        })
    }
}
