use thiserror::Error;

/// Errors raised by the library. Variants are grouped so the command-line
/// front end can map them to exit codes.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("stepsize condition violated: {0}")]
    StepsizeCondition(String),

    #[error("matrix is rank deficient ({0}); use the hyperplane or box_dantzig terms for affine constraints")]
    RankDeficient(String),

    #[error("graph is not connected: node {0} is unreachable from node 0")]
    DisconnectedGraph(usize),

    #[error("no convergence after {iters} iterations (last residual {residual:e})")]
    NonConvergence { iters: usize, residual: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl OptError {
    /// True for errors caused by bad input rather than by the numerics.
    pub fn is_config_error(&self) -> bool {
        !matches!(self, OptError::NonConvergence { .. } | OptError::Numerical(_))
    }
}

impl From<std::io::Error> for OptError {
    fn from(e: std::io::Error) -> Self {
        OptError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, OptError>;
