use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid branching mechanism: {0}")]
    InvalidMechanism(String),

    #[error("invalid offspring distribution: {0}")]
    InvalidOffspring(String),

    /// `∫^∞ du/ψ(u)` diverges, so the extinction function is infinite.
    #[error("Grey condition fails: v(t) is infinite for this mechanism")]
    GreyConditionFails,

    #[error("node budget of {budget} vertices exceeded")]
    NodeBudgetExceeded { budget: usize },

    #[error("invalid Lukasiewicz walk at step {step}: {reason}")]
    InvalidWalk { step: usize, reason: String },

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    /// A conditioning event that has probability zero (or an exhausted retry budget).
    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("numerical solver failed: {0}")]
    Solver(String),

    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),

    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
