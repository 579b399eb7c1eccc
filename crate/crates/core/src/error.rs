use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the engine can report.
///
/// Variants carry enough context (layer, row, file) to be shown to a user
/// as-is; [`Error::code`] gives a stable machine-readable tag.
#[derive(Debug, Error)]
pub enum Error {
    // validation
    #[error("layer '{layer}' has {rows} rows but {expected} stimulus ids were given")]
    MismatchedStimulusCount { layer: String, rows: usize, expected: usize },
    #[error("non-finite value in {context} at row {row}, column {col}")]
    NonFiniteValue { context: String, row: usize, col: usize },
    #[error("duplicate layer name '{0}'")]
    DuplicateLayerName(String),
    #[error("duplicate condition id '{0}'")]
    DuplicateCondition(String),
    #[error("RDM needs at least 3 conditions, got {0}")]
    TooFewConditions(usize),
    #[error("RDM is not symmetric at ({row}, {col})")]
    AsymmetricRdm { row: usize, col: usize },
    #[error("RDM has non-zero diagonal at index {0}")]
    NonzeroDiagonal(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("condition ids differ between {0}")]
    ConditionMismatch(String),
    #[error("only {0} shared conditions, need at least 3")]
    InsufficientOverlap(usize),
    #[error("duplicate voxel coordinate at rows {0} and {1}")]
    DuplicateCoordinate(usize, usize),
    #[error("empty input: {0}")]
    EmptyInput(String),

    // rdm engine
    #[error("row {0} is constant; correlation distance is undefined")]
    ConstantRow(usize),
    #[error("row {0} has zero norm; cosine distance is undefined")]
    ZeroNormRow(usize),
    #[error("correlation distance needs at least 2 features, got {0}")]
    TooFewFeatures(usize),
    #[error("unknown metric '{0}' (expected correlation, euclidean or cosine)")]
    UnknownMetric(String),

    // statistics
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("input is constant")]
    ConstantInput,
    #[error("all values are tied after ranking")]
    AllTied,
    #[error("need at least {needed} values, got {got}")]
    TooFewSubjects { needed: usize, got: usize },
    #[error("invalid p-value {0}")]
    InvalidP(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    // analyses
    #[error("subject lists differ between results")]
    SubjectMismatch,
    #[error("cannot split {n_conditions} conditions into {n_folds} folds")]
    TooManyFolds { n_conditions: usize, n_folds: usize },
    #[error("every test fold has fewer than 3 conditions")]
    TestFoldTooSmall,
    #[error("no searchlight center passed the validity checks")]
    AllCentersInvalid,

    // formats
    #[error("{path}: not an NPY file (bad magic)")]
    BadMagic { path: PathBuf },
    #[error("{path}: unsupported NPY version {major}.{minor}")]
    UnsupportedVersion { path: PathBuf, major: u8, minor: u8 },
    #[error("{path}: unsupported dtype '{descr}'")]
    UnsupportedDescr { path: PathBuf, descr: String },
    #[error("{path}: Fortran-ordered arrays are not supported")]
    FortranOrderUnsupported { path: PathBuf },
    #[error("{path}: payload has {got} bytes, expected {expected}")]
    TruncatedPayload { path: PathBuf, expected: usize, got: usize },
    #[error("{path}: malformed header: {reason}")]
    BadHeader { path: PathBuf, reason: String },
    #[error("unsupported array rank {0} (1 to 3 dimensions allowed)")]
    UnsupportedRank(usize),
    #[error("{path}: {reason}")]
    Manifest { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Stable tag used by the command-line front end.
    pub fn code(&self) -> &'static str {
        match self {
            Error::MismatchedStimulusCount { .. }
            | Error::NonFiniteValue { .. }
            | Error::DuplicateLayerName(_)
            | Error::DuplicateCondition(_)
            | Error::TooFewConditions(_)
            | Error::AsymmetricRdm { .. }
            | Error::NonzeroDiagonal(_)
            | Error::Shape(_)
            | Error::DuplicateCoordinate(..)
            | Error::EmptyInput(_)
            | Error::ConstantRow(_)
            | Error::ZeroNormRow(_)
            | Error::TooFewFeatures(_)
            | Error::ConstantInput
            | Error::AllTied => "E_VALIDATION",
            Error::ConditionMismatch(_) | Error::InsufficientOverlap(_) => "E_ALIGN",
            Error::UnknownMetric(_) => "E_METRIC",
            Error::LengthMismatch(..)
            | Error::TooFewSubjects { .. }
            | Error::InvalidP(_)
            | Error::SubjectMismatch
            | Error::TooManyFolds { .. }
            | Error::TestFoldTooSmall => "E_ANALYSIS",
            Error::InvalidParameter(_) => "E_ARGS",
            Error::AllCentersInvalid => "E_EMPTY_MAP",
            Error::BadMagic { .. }
            | Error::UnsupportedVersion { .. }
            | Error::UnsupportedDescr { .. }
            | Error::FortranOrderUnsupported { .. }
            | Error::TruncatedPayload { .. }
            | Error::BadHeader { .. }
            | Error::UnsupportedRank(_)
            | Error::Manifest { .. }
            | Error::Json { .. } => "E_FORMAT",
            Error::Io { .. } => "E_IO",
            Error::Context { source, .. } => source.code(),
        }
    }

    /// The innermost error, looking through [`Error::Context`] wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }

    pub(crate) fn context(self, context: impl Into<String>) -> Error {
        Error::Context { context: context.into(), source: Box::new(self) }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
        Error::Io { path: path.into(), source }
    }
}
