use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("unbounded polytope")]
    UnboundedPolytope,

    #[error("polytope has empty interior")]
    EmptyInterior,

    #[error("closed loop is not stable (spectral radius {0})")]
    Unstable(f64),

    #[error("no convergence after {0} iterations")]
    NoConvergence(usize),

    #[error("state outside interpolation domain")]
    OutsideDomain,

    #[error("invariant set nesting violated: {0}")]
    Nesting(String),

    #[error("reference not admissible: {0}")]
    Admissibility(String),

    #[error("simulation diverged at t = {t} s: {reason}")]
    Divergence { t: f64, reason: String },

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn dim(expected: usize, got: usize) -> Self {
        Error::DimensionMismatch { expected, got }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }

    /// Short machine-readable tag for the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Solver(_) => "solver",
            Error::UnboundedPolytope => "unbounded_polytope",
            Error::EmptyInterior => "empty_interior",
            Error::Unstable(_) => "unstable",
            Error::NoConvergence(_) => "no_convergence",
            Error::OutsideDomain => "outside_domain",
            Error::Nesting(_) => "nesting",
            Error::Admissibility(_) => "admissibility",
            Error::Divergence { .. } => "divergence",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
            Error::Parse(_) => "parse",
        }
    }
}
