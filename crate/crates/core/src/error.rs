use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("model has {found} {what}, at most {max} are supported")]
    TooLarge {
        what: &'static str,
        found: usize,
        max: usize,
    },

    #[error("state space has {count} states, above the cap of {cap}")]
    StateSpaceCap { count: u128, cap: u128 },

    #[error("model is not separable: classes {0} and {1} share both their type set and their server set")]
    NotSeparable(usize, usize),

    #[error("invalid assignment: {0}")]
    InvalidAssignment(String),

    #[error("invalid simulation protocol: {0}")]
    InvalidProtocol(String),

    #[error("balanced fairness allocation needs balance tables")]
    MissingTables,

    #[error("linear solve failed: {0}")]
    Solve(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("unknown policy `{0}`")]
    UnknownPolicy(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
