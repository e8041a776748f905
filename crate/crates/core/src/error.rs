use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid bound configuration: {0}")]
    InvalidBoundConfig(String),

    #[error("radius inversion needs x > 0 and sigma > 0 (x = {x}, sigma = {sigma})")]
    InvalidInversion { x: f64, sigma: f64 },

    /// No sample count up to the ceiling brings the radius below `x`.
    #[error("no sample count up to {ceiling} has a confidence radius below {x}")]
    InversionOverflow { x: f64, ceiling: u64 },

    #[error("agent index {index} out of range for {num_agents} agents")]
    AgentOutOfRange { index: usize, num_agents: usize },

    #[error("invalid problem instance: {0}")]
    InvalidInstance(String),

    #[error("class of agent {0} is empty")]
    EmptyClass(usize),

    /// Every agent shares the class of `agent`, so there is nothing to separate.
    #[error("class of agent {agent} is trivially identified (no agent outside it)")]
    ClassTriviallyIdentified { agent: usize },

    #[error("weight support of agent {0} has no queried member")]
    DegenerateSupport(usize),

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),

    #[error("full traces need {needed} bytes, over the {budget} byte budget; use aggregate traces")]
    TraceBudgetExceeded { needed: u64, budget: u64 },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
