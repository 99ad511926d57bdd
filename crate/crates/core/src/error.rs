use thiserror::Error;

use crate::types::Label;

/// Errors raised by configuration validation, mechanism construction,
/// sampling and verification.
///
/// Every variant carries a stable upper-snake-case code (see [`Error::code`])
/// that the CLI and JSON reports use verbatim.
#[derive(Debug, Clone, PartialEq, Error)]
#[non_exhaustive]
pub enum Error {
    #[error("S1 and S2 must be disjoint; label {0} appears in both")]
    OverlappingPartition(Label),

    #[error("S1 and S2 must cover every label; label {0} is in neither")]
    IncompletePartition(Label),

    #[error("delta is out of range: {0}")]
    DeltaOutOfRange(String),

    #[error("inconsistent output partition: {0}")]
    InconsistentOutputPartition(String),

    #[error(
        "S2 is nonempty but the privatized minority block is empty; \
         the normalization system has no solution unless l = |S~1| (l = {l}, |S~1| = {s_tilde1})"
    )]
    EmptyOutputWithNonemptySource { l: usize, s_tilde1: usize },

    #[error("epsilon must be positive and finite, got {0}")]
    NonpositiveEpsilon(f64),

    #[error("sigma must be positive and finite, got {0}")]
    NonpositiveSigma(f64),

    #[error("Laplace scale must be positive and finite, got {0}")]
    NonpositiveScale(f64),

    #[error("sample count must be positive")]
    NonpositiveN,

    #[error("label {label} is outside the label space of size {k}")]
    LabelOutOfRange { label: Label, k: usize },

    #[error("invalid block mapping: {0}")]
    InvalidMapping(String),

    #[error("invalid label space: {0}")]
    InvalidLabelSpace(String),

    #[error("l = {l} exceeds |S~1| = {max}")]
    LOutOfRange { l: usize, max: usize },

    #[error("malformed matrix: {0}")]
    MalformedMatrix(String),

    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("degenerate normalization system (kappa = {0})")]
    DegenerateSystem(f64),

    #[error("bin map has no usable bins: {0}")]
    EmptyBins(String),

    #[error("invalid regression configuration: {0}")]
    InvalidRegressionConfig(String),

    #[error("split leaves one side empty (|D1| = {d1}, |D2| = {d2})")]
    EmptySplit { d1: usize, d2: usize },

    #[error("split fraction must lie in (0, 1), got {0}")]
    InvalidSplitFraction(f64),

    #[error("class-count profile is empty or all zero")]
    EmptyProfile,

    #[error("datasets are not aligned by id: {0}")]
    IdMismatch(String),

    #[error("unknown mechanism {0:?}")]
    UnknownMechanism(String),

    #[error("duplicate record id {0}")]
    DuplicateId(u64),

    #[error("I/O error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::OverlappingPartition(_) => "OVERLAPPING_PARTITION",
            Error::IncompletePartition(_) => "INCOMPLETE_PARTITION",
            Error::DeltaOutOfRange(_) => "DELTA_OUT_OF_RANGE",
            Error::InconsistentOutputPartition(_) => "INCONSISTENT_OUTPUT_PARTITION",
            Error::EmptyOutputWithNonemptySource { .. } => "EMPTY_OUTPUT_WITH_NONEMPTY_SOURCE",
            Error::NonpositiveEpsilon(_) => "NONPOSITIVE_EPSILON",
            Error::NonpositiveSigma(_) => "NONPOSITIVE_SIGMA",
            Error::NonpositiveScale(_) => "NONPOSITIVE_SCALE",
            Error::NonpositiveN => "NONPOSITIVE_N",
            Error::LabelOutOfRange { .. } => "LABEL_OUT_OF_RANGE",
            Error::InvalidMapping(_) => "INVALID_MAPPING",
            Error::InvalidLabelSpace(_) => "INVALID_LABEL_SPACE",
            Error::LOutOfRange { .. } => "L_OUT_OF_RANGE",
            Error::MalformedMatrix(_) => "MALFORMED_MATRIX",
            Error::InvalidPrior(_) => "INVALID_PRIOR",
            Error::DegenerateSystem(_) => "DEGENERATE_SYSTEM",
            Error::EmptyBins(_) => "EMPTY_BINS",
            Error::InvalidRegressionConfig(_) => "INVALID_REGRESSION_CONFIG",
            Error::EmptySplit { .. } => "EMPTY_SPLIT",
            Error::InvalidSplitFraction(_) => "INVALID_SPLIT_FRACTION",
            Error::EmptyProfile => "EMPTY_PROFILE",
            Error::IdMismatch(_) => "ID_MISMATCH",
            Error::UnknownMechanism(_) => "UNKNOWN_MECHANISM",
            Error::DuplicateId(_) => "DUPLICATE_ID",
            Error::Io(_) => "IO",
            Error::Parse(_) => "PARSE",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
