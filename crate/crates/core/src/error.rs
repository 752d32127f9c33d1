use std::fmt;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse error families. The CLI maps these to exit codes and the HTTP
/// layer maps them to status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCategory {
    /// Malformed or inconsistent input data (pool files, labels).
    Input,
    /// Out-of-range configuration or argument values.
    Parameter,
    /// A quantity that is mathematically undefined for the given data.
    Undefined,
    /// The oracle could not produce a label.
    Oracle,
    /// Session lookup or state-machine violations.
    Session,
    /// Filesystem and serialization failures.
    Io,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Input => 3,
            ErrorCategory::Parameter => 4,
            ErrorCategory::Undefined => 5,
            ErrorCategory::Oracle => 6,
            ErrorCategory::Session => 7,
            ErrorCategory::Io => 8,
        }
    }
}

impl fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ErrorCategory::Input => "input",
            ErrorCategory::Parameter => "parameter",
            ErrorCategory::Undefined => "undefined",
            ErrorCategory::Oracle => "oracle",
            ErrorCategory::Session => "session",
            ErrorCategory::Io => "io",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("row {row}: {message}")]
    InvalidRow { row: u64, message: String },

    #[error("duplicate pair_id `{0}`")]
    DuplicatePairId(String),

    #[error("pool is empty")]
    EmptyPool,

    #[error("invalid `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("`{name}` = {value} lies outside [0, 1]")]
    Domain { name: &'static str, value: f64 },

    #[error("pair `{0}` has no ground-truth label")]
    IncompleteGroundTruth(String),

    #[error("F-measure is undefined: no true or predicted matches")]
    UndefinedMeasure,

    #[error("initial F-measure guess is undefined (zero denominator)")]
    UndefinedInitialF,

    #[error("scores are flagged as probabilities but pair `{pair_id}` has score {score}")]
    InconsistentScoreFlag { pair_id: String, score: f64 },

    #[error("instrumental distribution has no mass")]
    DegenerateDistribution,

    #[error("oracle cannot label pair `{pair_id}`: {reason}")]
    OracleCapability { pair_id: String, reason: &'static str },

    #[error("no labeller has supplied a label for pair `{0}`")]
    NoLabeller(String),

    #[error("session `{0}` not found")]
    SessionNotFound(String),

    #[error("session `{0}` already exists")]
    SessionExists(String),

    #[error("session `{0}` is exhausted")]
    SessionExhausted(String),

    #[error("label is for pair `{got}` but the pending query is `{expected}`")]
    Conflict { expected: String, got: String },

    #[error("invalid label `{0}`: expected 0 or 1")]
    InvalidLabel(String),

    #[error("spec file line {line}: {message}")]
    SpecFile { line: usize, message: String },

    #[error("event log: {0}")]
    EventLog(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter { name, reason: reason.into() }
    }

    pub fn category(&self) -> ErrorCategory {
        use Error::*;
        match self {
            MissingColumn(_)
            | InvalidRow { .. }
            | DuplicatePairId(_)
            | EmptyPool
            | InconsistentScoreFlag { .. }
            | IncompleteGroundTruth(_)
            | InvalidLabel(_)
            | SpecFile { .. } => ErrorCategory::Input,
            Parameter { .. } | Domain { .. } => ErrorCategory::Parameter,
            UndefinedMeasure | UndefinedInitialF | DegenerateDistribution => ErrorCategory::Undefined,
            OracleCapability { .. } | NoLabeller(_) => ErrorCategory::Oracle,
            SessionNotFound(_) | SessionExists(_) | SessionExhausted(_) | Conflict { .. } => {
                ErrorCategory::Session
            }
            EventLog(_) | Io(_) | Csv(_) | Json(_) => ErrorCategory::Io,
        }
    }

    /// The offending field, when the error is about one.
    pub fn field(&self) -> Option<&str> {
        match self {
            Error::MissingColumn(c) => Some(c),
            Error::Parameter { name, .. } | Error::Domain { name, .. } => Some(name),
            Error::InvalidLabel(_) => Some("label"),
            Error::Conflict { .. } => Some("pair_id"),
            _ => None,
        }
    }
}

pub(crate) fn check_unit(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::Domain { name, value })
    }
}
