use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degree error: {0}")]
    Degree(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("singular form{}: {detail}", location.as_ref().map(|l| format!(" at {l}")).unwrap_or_default())]
    Singular {
        location: Option<String>,
        detail: String,
    },

    #[error("(k={k}, d={d}) does not satisfy 3^k - 2kd^(k-1) = 4m + 1")]
    Admissibility { k: usize, d: usize },

    #[error("not an embedding: {0}")]
    Embedding(String),

    #[error("history error: {0}")]
    History(String),

    #[error("no convergence after {iterations} iterations (gradient norm {grad_norm:.3e})")]
    Convergence {
        iterations: usize,
        grad_norm: f64,
        trace: Vec<crate::dynamics::TraceRow>,
    },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("composition error: {0}")]
    Composition(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl Error {
    pub(crate) fn singular(detail: impl Into<String>) -> Self {
        Error::Singular {
            location: None,
            detail: detail.into(),
        }
    }

    /// Attach a node location to a singularity error, leaving other errors alone.
    pub fn at(self, location: impl Into<String>) -> Self {
        match self {
            Error::Singular { detail, .. } => Error::Singular {
                location: Some(location.into()),
                detail,
            },
            other => other,
        }
    }
}
