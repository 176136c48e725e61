use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid proportions: {0}")]
    InvalidProportions(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("graph too small: need at least {required} nodes, got {actual}")]
    TooFewNodes { required: usize, actual: usize },

    #[error("node count mismatch: expected {expected}, got {actual}")]
    SizeMismatch { expected: usize, actual: usize },

    #[error("weight density domain error: {0}")]
    Domain(String),

    #[error("degenerate denominator in moment inversion ({0})")]
    DegenerateDenominator(&'static str),

    #[error("no proportions reproduce the mixture weights (residual {residual:.3e})")]
    NoValidProportions { residual: f64 },

    #[error("pattern with positive count has zero density")]
    ZeroDensity,

    #[error("graph has no present edges")]
    NoPresentEdges,

    #[error("node {0} is isolated")]
    IsolatedNode(usize),

    #[error("sampled an exact-zero weight twice for pair ({0}, {1})")]
    ZeroWeightDraw(usize, usize),

    #[error("Newton iteration did not converge for target mean {0}")]
    NewtonFailure(f64),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: duplicate edge ({i}, {j})")]
    DuplicateEdge { line: usize, i: usize, j: usize },

    #[error("line {line}: self-loop on node {node}")]
    SelfLoop { line: usize, node: usize },

    #[error("unknown preset {0:?}")]
    UnknownPreset(String),

    #[error("invalid benchmark config: {0}")]
    InvalidConfig(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse {
            line: e.line(),
            message: e.to_string(),
        }
    }
}

impl Error {
    /// Broad class used by the command-line front end to pick an exit code.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::DegenerateDenominator(_)
            | Error::NoValidProportions { .. }
            | Error::ZeroDensity
            | Error::NewtonFailure(_)
            | Error::ZeroWeightDraw(..) => ErrorKind::Solver,
            Error::InvalidParameter(_)
            | Error::InvalidProportions(_)
            | Error::UnknownPreset(_)
            | Error::InvalidConfig(_) => ErrorKind::Usage,
            _ => ErrorKind::Data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Solver,
}
