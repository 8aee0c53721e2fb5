use thiserror::Error;

/// Every failure the library can report.
///
/// Variants map one-to-one onto the error kinds surfaced by the CLI, see
/// [`Error::kind`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("bounds error: {0}")]
    Bounds(String),
    #[error("dimension error: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("pattern structure error: {0}")]
    PatternStructure(String),
    #[error("pattern is incomplete")]
    IncompletePattern,
    #[error("index out of range: {0}")]
    Index(String),
    #[error("neuron ({layer}, {neuron}) is already unconstrained")]
    AlreadyUnconstrained { layer: usize, neuron: usize },
    #[error("pattern is infeasible: {0}")]
    InfeasiblePattern(String),
    #[error("resource limit reached after {nodes} branch-and-bound nodes")]
    ResourceLimit { nodes: usize },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("degenerate margin: seed logits tie for class {target} against {rival}")]
    DegenerateMargin { target: usize, rival: usize },
    #[error("value out of range: {0}")]
    Range(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error("region is empty")]
    EmptyRegion,
    #[error("region is degenerate along axis {axis} (width {width:e})")]
    DegenerateRegion {
        axis: usize,
        width: f64,
        /// Best box found; callers that only need a log-volume may still use it.
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("non-numeric value {value:?} in column {column:?} (row {row})")]
    NonNumeric {
        column: String,
        row: usize,
        value: String,
    },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("cap exceeded: {0}")]
    CapExceeded(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse(_) => "ParseError",
            Error::Shape(_) => "ShapeError",
            Error::Bounds(_) => "BoundsError",
            Error::Dimension { .. } => "DimensionError",
            Error::PatternStructure(_) => "PatternStructureError",
            Error::IncompletePattern => "IncompletePatternError",
            Error::Index(_) => "IndexError",
            Error::AlreadyUnconstrained { .. } => "AlreadyUnconstrainedError",
            Error::InfeasiblePattern(_) => "InfeasiblePattern",
            Error::ResourceLimit { .. } => "ResourceLimit",
            Error::Precondition(_) => "PreconditionError",
            Error::DegenerateMargin { .. } => "DegenerateMarginError",
            Error::Range(_) => "RangeError",
            Error::Internal(_) => "InternalError",
            Error::EmptyRegion => "EmptyRegion",
            Error::DegenerateRegion { .. } => "DegenerateRegion",
            Error::Numerical(_) => "NumericalError",
            Error::NonNumeric { .. } => "NonNumericError",
            Error::EmptyDataset => "EmptyDataset",
            Error::CapExceeded(_) => "CapExceeded",
            Error::Io(_) => "IoError",
        }
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

pub type Result<T> = std::result::Result<T, Error>;
