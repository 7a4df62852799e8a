use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("{0} is not a prime power in [2, 65536]")]
    NotAPrimePower(u64),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("vectors belong to different fields (q = {0} vs q = {1})")]
    FieldMismatch(u32, u32),
    #[error("empty point set")]
    EmptySet,
    #[error("3-APs need odd characteristic, got q = {0}")]
    CharTwo(u32),
    #[error("pattern points are not distinct")]
    DuplicatePoints,
    #[error("expected {expected} points, got {got}")]
    WrongCardinality { expected: usize, got: usize },
    #[error("{what} = {value} exceeds cap {cap}")]
    TooLarge { what: &'static str, value: u128, cap: u128 },
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub(crate) fn too_large(what: &'static str, value: impl Into<u128>, cap: impl Into<u128>) -> Self {
        Error::TooLarge {
            what,
            value: value.into(),
            cap: cap.into(),
        }
    }

    pub(crate) fn bad(msg: impl Into<String>) -> Self {
        Error::BadParams(msg.into())
    }

    /// True for internal consistency failures.
    pub fn is_invariant(&self) -> bool {
        matches!(self, Error::Invariant(_))
    }

    /// True for resource-cap violations, as opposed to invalid input.
    pub fn is_cap(&self) -> bool {
        matches!(self, Error::TooLarge { .. })
    }
}
