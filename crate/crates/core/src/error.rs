use thiserror::Error;

/// Broad class of a failure, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Runtime,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("arm {arm} has no units")]
    EmptyArm { arm: String },
    #[error("non-finite value in column `{column}` at row {row}")]
    NonFiniteValue { column: String, row: usize },
    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: String,
        expected: usize,
        got: usize,
    },
    #[error("dataset needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("declared {declared} arms but found {found} distinct labels")]
    ArmCountMismatch { declared: usize, found: usize },
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("cannot parse `{value}` in column `{column}` at row {row}")]
    Parse {
        column: String,
        row: usize,
        value: String,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("threshold grid is empty")]
    EmptyGrid,
    #[error("threshold grid must be finite and strictly increasing")]
    UnorderedGrid,
    #[error("fold count {folds} invalid for {n} units (need 2 <= L <= n)")]
    BadFoldCount { n: usize, folds: usize },

    #[error("training set is empty")]
    DegenerateTrainingSet,
    #[error("labels must be 0 or 1, found {0}")]
    InvalidLabel(f64),
    #[error("feature dimension mismatch: model expects {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid hyperparameter `{name}`: {reason}")]
    InvalidHyperparameter { name: String, reason: String },

    #[error("no training units for fold {fold} in arm {arm}; raise the sample size or lower the fold count")]
    EmptyTrainingCell { fold: usize, arm: String },
    #[error("nuisance tensor not aligned with data: {0}")]
    AlignmentMismatch(String),

    #[error("cannot contrast arm {0} with itself")]
    SameArm(usize),
    #[error("unknown arm index {0}")]
    UnknownArm(usize),
    #[error("bin edge {0} is not a grid point")]
    EdgesOffGrid(f64),
    #[error("bin edges must be strictly increasing with at least two entries")]
    BadBinEdges,
    #[error("no grid point reaches cumulative probability {tau} in arm {arm}")]
    TauOutOfReach { tau: f64, arm: usize },
    #[error("quantile effects need a continuous outcome; set the continuity flag to force")]
    DiscreteOutcome,
    #[error("quantile levels must be strictly increasing inside (0, 1)")]
    BadQuantileGrid,

    #[error("effect curve carries no influence values")]
    MissingInfluence,
    #[error("bootstrap needs at least {needed} draws, got {got}")]
    InsufficientDraws { needed: usize, got: usize },
    #[error("bootstrap draws are degenerate at every index point")]
    DegenerateDraws,
    #[error("alpha must lie in (0, 1), got {0}")]
    AlphaOutOfRange(f64),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            EmptyArm { .. }
            | NonFiniteValue { .. }
            | LengthMismatch { .. }
            | TooFewRows(_)
            | ArmCountMismatch { .. }
            | MissingColumn(_)
            | Parse { .. }
            | Csv(_)
            | EmptyGrid
            | UnorderedGrid
            | InvalidLabel(_) => ErrorClass::Data,
            Config(_)
            | Json(_)
            | BadFoldCount { .. }
            | InvalidHyperparameter { .. }
            | SameArm(_)
            | UnknownArm(_)
            | EdgesOffGrid(_)
            | BadBinEdges
            | BadQuantileGrid
            | AlphaOutOfRange(_) => ErrorClass::Config,
            _ => ErrorClass::Runtime,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
