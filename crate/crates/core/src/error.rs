use std::fmt;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Pipeline role a failure is attributed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Score regression (first block).
    Score,
    /// Difference regression on controls (second block).
    Difference,
    /// Residual matching and the treated average (third block).
    Matching,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Score => "I1 (score regression)",
            Stage::Difference => "I2 (difference regression)",
            Stage::Matching => "I3 (residual matching)",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("cannot parse value in row {row}, column `{col}`")]
    ParseError { row: usize, col: String },

    #[error("non-finite value in row {row}, column `{col}`")]
    NonFiniteValue { row: usize, col: String },

    #[error("too few rows: {0} (need at least 9)")]
    TooFewRows(usize),

    #[error("invalid column specification: {0}")]
    InvalidSpec(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("design matrix is rank deficient (effective rank {rank} of {cols})")]
    RankDeficient { rank: usize, cols: usize },

    #[error("split too small: {rows} rows for {cols} coefficients")]
    SplitTooSmall { rows: usize, cols: usize },

    #[error("index {index} out of range for {n} rows")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("no control observations available")]
    EmptyControlGroup,

    #[error("no treated observations available")]
    EmptyTreatedGroup,

    #[error("too few controls: {0}")]
    TooFewControls(usize),

    #[error("covariate {0} has zero variance")]
    DegenerateCovariate(usize),

    #[error("expected {expected} covariates, got {got}")]
    ArityMismatch { expected: usize, got: usize },

    #[error("bootstrap failed on {failed} of {requested} replicates (budget 2%)")]
    TooManyFailures { failed: usize, requested: usize },

    #[error("confidence level must lie in (0, 1), got {0}")]
    InvalidLevel(f64),

    #[error("malformed model file: {0}")]
    ModelFormat(String),

    #[error("split {stage}: {source}")]
    InSplit {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },

    #[error("cross-fitting rotation {rotation}: {source}")]
    InRotation {
        rotation: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("replicate {index}: {source}")]
    InReplicate {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn in_split(self, stage: Stage) -> Error {
        Error::InSplit {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error once split, rotation and replicate labels are peeled off.
    pub fn root(&self) -> &Error {
        match self {
            Error::InSplit { source, .. }
            | Error::InRotation { source, .. }
            | Error::InReplicate { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for failures caused by user input rather than numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self.root(),
            Error::MissingColumn(_)
                | Error::ParseError { .. }
                | Error::NonFiniteValue { .. }
                | Error::TooFewRows(_)
                | Error::InvalidSpec(_)
                | Error::ArityMismatch { .. }
                | Error::InvalidLevel(_)
                | Error::ModelFormat(_)
                | Error::Io(_)
                | Error::Csv(_)
        )
    }
}
