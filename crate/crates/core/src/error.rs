use thiserror::Error;

/// Errors raised by the analysis library.
///
/// Record-file problems have their own enum ([`RecordError`]) so callers can
/// tell a corrupt payload apart from a bad configuration.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("too many simultaneous faults: {0} given, at most 2 allowed")]
    TooManyFaults(usize),

    #[error("record too short: {needed} samples needed, {actual} available")]
    TooShort { needed: usize, actual: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("frame times must be strictly increasing: {previous} then {current}")]
    NonMonotonicTime { previous: f64, current: f64 },

    #[error("unknown comparison mode `{0}`")]
    UnknownMode(String),

    #[error(transparent)]
    Record(#[from] RecordError),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Short machine-readable tag, used for the CLI's JSON error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::TooManyFaults(_) => "too_many_faults",
            Error::TooShort { .. } => "too_short",
            Error::Degenerate(_) => "degenerate_input",
            Error::Singular(_) => "singular_matrix",
            Error::NonMonotonicTime { .. } => "non_monotonic_time",
            Error::UnknownMode(_) => "unknown_mode",
            Error::Record(e) => e.kind(),
        }
    }
}

/// Errors from reading or writing record files and JSON artifacts.
#[derive(Debug, Error)]
pub enum RecordError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed header {path}: {reason}")]
    MalformedHeader { path: String, reason: String },

    #[error("unsupported format version {found} (this build reads version {supported})")]
    UnknownVersion { found: u32, supported: u32 },

    #[error("truncated payload {path}: expected {expected} bytes, found {actual}")]
    Truncated { path: String, expected: u64, actual: u64 },

    #[error("CSV parse error in {path} at line {line}: {reason}")]
    CsvParse { path: String, line: u64, reason: String },

    #[error("malformed JSON document {path}: {reason}")]
    MalformedJson { path: String, reason: String },
}

impl RecordError {
    pub fn kind(&self) -> &'static str {
        match self {
            RecordError::Io { .. } => "io",
            RecordError::MalformedHeader { .. } => "malformed_header",
            RecordError::UnknownVersion { .. } => "unknown_version",
            RecordError::Truncated { .. } => "truncated_payload",
            RecordError::CsvParse { .. } => "csv_parse",
            RecordError::MalformedJson { .. } => "malformed_json",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
