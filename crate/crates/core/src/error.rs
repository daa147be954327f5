use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Dimension mismatch between two objects that must agree.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// An argument lies outside its valid range.
    #[error("domain error: {0}")]
    Domain(String),

    /// A constructed value violates a structural invariant.
    #[error("invalid {what}: {why}")]
    Invalid { what: &'static str, why: String },

    /// A required reward model is missing.
    #[error("MDP carries no reward model")]
    MissingReward,

    /// An iterative solver hit its iteration cap before reaching tolerance.
    #[error("no convergence after {iterations} iterations (last residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    /// An iterative solver failed at a specific outer step.
    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    /// Policy-gradient weights blew past the divergence guard.
    #[error("policy weights diverged: {0}")]
    Diverged(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
