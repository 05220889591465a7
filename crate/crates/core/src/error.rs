use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("output has zero marginal")]
    ZeroMarginal,

    #[error("cyclic micro-graph")]
    CyclicMicroGraph,

    #[error("cyclic channel; cannot marginalize exactly")]
    CyclicChannel,

    #[error("tractability cap exceeded: {what} needs {needed} > cap {cap}")]
    Tractability {
        what: &'static str,
        needed: u128,
        cap: u128,
    },

    #[error("mechanism source set too large for bipartition search ({n} occasions); pass an explicit partition")]
    TooManySources { n: usize },

    #[error("invalid graining: {0}")]
    InvalidGraining(String),

    #[error("ground output missing a bound occasion: {0}")]
    MissingGroundOutput(String),

    #[error("not a subgraining")]
    NotSubgrain,

    #[error("invalid occasion graph: {0}")]
    InvalidGraph(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("unknown mechanism function: {0}")]
    UnknownFunction(String),
}

impl Error {
    /// Process exit code the CLI maps this error onto.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Tractability { .. } | Error::TooManySources { .. } => 3,
            _ => 2,
        }
    }
}
