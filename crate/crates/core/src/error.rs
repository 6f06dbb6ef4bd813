use thiserror::Error;

/// Errors raised anywhere in the lab.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid graph: {0}")]
    Graph(String),

    #[error("invalid mixing matrix: {0}")]
    Mixing(String),

    #[error("spectral solver did not converge after {iterations} iterations")]
    SpectralNonConvergence { iterations: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("oracle: {0}")]
    Oracle(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("diverged at iteration {k}")]
    Divergence { k: usize },

    #[error("parameter selection: {0}")]
    Params(String),

    #[error("config: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl LabError {
    /// Short machine-readable tag, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            LabError::Graph(_) => "graph",
            LabError::Mixing(_) => "mixing",
            LabError::SpectralNonConvergence { .. } => "spectral",
            LabError::Domain(_) => "domain",
            LabError::Shape { .. } => "shape",
            LabError::Oracle(_) => "oracle",
            LabError::NonFinite(_) => "non_finite",
            LabError::Divergence { .. } => "divergence",
            LabError::Params(_) => "params",
            LabError::Config(_) => "config",
            LabError::Parse(_) => "parse",
            LabError::Io(_) => "io",
        }
    }

    pub(crate) fn shape(expected: impl ToString, got: impl ToString) -> Self {
        LabError::Shape {
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
