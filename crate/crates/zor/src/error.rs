use std::fmt;

/// Errors reported by filter construction and decoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// A configuration value is out of its supported range.
    InvalidConfig(&'static str),
    /// Fuse construction did not find a complete peel order within the
    /// attempt budget.
    ConstructionExhausted { attempts: u32 },
    /// A serialized filter is malformed; `offset` is the byte position at
    /// which decoding failed.
    Format { offset: usize, reason: &'static str },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::ConstructionExhausted { attempts } => {
                write!(f, "fuse construction exhausted after {attempts} attempts")
            }
            Error::Format { offset, reason } => {
                write!(f, "malformed filter data at byte {offset}: {reason}")
            }
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
