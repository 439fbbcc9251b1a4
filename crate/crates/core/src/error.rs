use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("instance too large for exhaustive search: {count} assignments exceed cap {cap}")]
    EnumerationCap { count: u128, cap: u64 },

    #[error("degenerate instance: every share at AP {ap} (slot {slot}) sits on the floor")]
    Degenerate { slot: usize, ap: usize },

    #[error("unknown scenario preset `{0}`")]
    UnknownPreset(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
