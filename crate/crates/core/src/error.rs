use std::path::PathBuf;

use crate::scene::CompositionWarning;
use crate::validate::Violation;

pub type Result<T, E = SiaError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum SiaError {
    #[error("validation failed with {} violation(s)", .0.len())]
    ValidationFailed(Vec<Violation>),

    #[error("permission denied: expert role required")]
    PermissionDenied,

    #[error("not found: {0}")]
    NotFound(String),

    #[error("unknown place '{0}'")]
    UnknownPlace(String),

    #[error("unknown period '{0}'")]
    UnknownPeriod(String),

    #[error("invalid interval: {lo} > {hi}")]
    InvalidInterval { lo: i32, hi: i32 },

    #[error("parse error at {line}:{column}: {message}")]
    Parse {
        line: u32,
        column: u32,
        message: String,
    },

    #[error("unknown schema version {0}")]
    SchemaVersionUnknown(u32),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("invalid query: {0}")]
    InvalidSpec(String),

    #[error("invalid schema delta: {0}")]
    InvalidDelta(String),

    #[error("stale migration plan: plan starts at v{plan}, active schema is v{active}")]
    StalePlan { plan: u32, active: u32 },

    #[error("required node '{0}' needs a default value")]
    DefaultMissing(String),

    #[error("invalid composition request: {0}")]
    InvalidRequest(String),

    #[error("nothing matched the requested places and periods")]
    EmptyComposition(Vec<CompositionWarning>),

    #[error("record '{0}' is not an image")]
    NotAnImage(String),

    #[error("opacity {0} outside [0, 1]")]
    InvalidOpacity(f64),

    #[error("vector plan of record '{record}' is not well-formed SVG: {reason}")]
    MalformedSourceVector { record: String, reason: String },

    #[error("corrupt record file {}: {reason}", .path.display())]
    CorruptRecordFile { path: PathBuf, reason: String },

    #[error("store is locked by another process ({})", .0.display())]
    Locked(PathBuf),

    #[error("store error: {0}")]
    Storage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SiaError {
    /// Stable kebab-case name of the error, used in API and CLI output.
    pub fn code(&self) -> &'static str {
        match self {
            SiaError::ValidationFailed(_) => "validation-failed",
            SiaError::PermissionDenied => "permission-denied",
            SiaError::NotFound(_) => "not-found",
            SiaError::UnknownPlace(_) => "unknown-place",
            SiaError::UnknownPeriod(_) => "unknown-period",
            SiaError::InvalidInterval { .. } => "invalid-interval",
            SiaError::Parse { .. } => "parse-error",
            SiaError::SchemaVersionUnknown(_) => "schema-version-unknown",
            SiaError::InvalidValue(_) => "invalid-value",
            SiaError::InvalidSpec(_) => "invalid-spec",
            SiaError::InvalidDelta(_) => "invalid-delta",
            SiaError::StalePlan { .. } => "stale-plan",
            SiaError::DefaultMissing(_) => "default-missing",
            SiaError::InvalidRequest(_) => "invalid-request",
            SiaError::EmptyComposition(_) => "empty-composition",
            SiaError::NotAnImage(_) => "not-an-image",
            SiaError::InvalidOpacity(_) => "invalid-opacity",
            SiaError::MalformedSourceVector { .. } => "malformed-source-vector",
            SiaError::CorruptRecordFile { .. } => "corrupt-record-file",
            SiaError::Locked(_) => "store-locked",
            SiaError::Storage(_) | SiaError::Io(_) => "storage-failure",
        }
    }

    pub(crate) fn parse_at(doc: &roxmltree::Document<'_>, pos: usize, message: impl Into<String>) -> Self {
        let p = doc.text_pos_at(pos);
        SiaError::Parse {
            line: p.row,
            column: p.col,
            message: message.into(),
        }
    }
}

impl From<roxmltree::Error> for SiaError {
    fn from(e: roxmltree::Error) -> Self {
        let pos = e.pos();
        SiaError::Parse {
            line: pos.row,
            column: pos.col,
            message: e.to_string(),
        }
    }
}
