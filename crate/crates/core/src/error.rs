use thiserror::Error;

/// Errors produced by scenario construction, solvers and the protocol layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("utility undefined at rate {rate}")]
    UtilityDomain { rate: f64 },

    #[error("{0}")]
    DimensionGuard(String),

    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    DidNotConverge { iterations: usize, residual: f64 },

    #[error("uplink user {i} is missing the metric for neighbor {j}")]
    MissingMetric { i: usize, j: usize },

    #[error("agent {agent} is not permitted to read {fact}")]
    KnowledgeViolation { agent: String, fact: String },

    #[error("level {level} solve failed: {source}")]
    LevelSolve {
        level: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
