use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("lattice mismatch: {0}")]
    LatticeMismatch(String),
    #[error("empty support after discretization")]
    EmptySupport,
    #[error("probability mass {escaped:e} left the gridded domain at step {step}")]
    DomainOverflow { step: usize, escaped: f64 },
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("configuration space too large: {size} joint configurations exceed the limit {limit}")]
    TooLarge { size: u128, limit: u128 },
    #[error("big-M constant {supplied} is too small; at least {required} is needed")]
    BadBigM { supplied: f64, required: f64 },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
