use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide result type.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Two grids that must share a shape do not.
    #[error("{what}: dimension mismatch, expected {expected_width}x{expected_height}, got {got_width}x{got_height}")]
    DimensionMismatch {
        what: &'static str,
        expected_width: usize,
        expected_height: usize,
        got_width: usize,
        got_height: usize,
    },

    /// A pixel marked valid carries a non-positive or non-finite depth.
    #[error("non-positive depth {value} at valid pixel ({row}, {col})")]
    NonPositiveDepth { row: usize, col: usize, value: f32 },

    /// An operation needs at least one contributing pixel and found none.
    #[error("empty overlap: {0}")]
    EmptyOverlap(String),

    /// A camera rig does not cover the sphere at the requested field of view.
    #[error("field of view {fov_deg}° leaves sphere coverage gaps (needs ≥ {required_deg}°); use the allow-gaps escape hatch to proceed anyway")]
    Coverage { fov_deg: f64, required_deg: f64 },

    /// A file does not conform to its declared format.
    #[error("format error in {path}{}: {msg}", offset.map(|o| format!(" at byte {o}")).unwrap_or_default())]
    Format {
        path: PathBuf,
        offset: Option<u64>,
        msg: String,
    },

    /// A configuration document is syntactically valid but semantically wrong.
    #[error("config field `{field}`: {msg}")]
    Config { field: String, msg: String },

    /// A curation stage failed; carries the stage name and captured diagnostics.
    #[error("stage `{stage}` failed: {msg}")]
    Stage { stage: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn dims(what: &'static str, expected: (usize, usize), got: (usize, usize)) -> Self {
        Error::DimensionMismatch {
            what,
            expected_width: expected.0,
            expected_height: expected.1,
            got_width: got.0,
            got_height: got.1,
        }
    }
}
