use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite parameter: {0}")]
    NonFinite(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("all likelihoods underflow to zero; recompute in log space")]
    LikelihoodUnderflow,

    #[error("prior has a zero entry at candidate {0}; xi is undefined")]
    ZeroPrior(usize),

    #[error("empty sample set")]
    EmptySamples,

    #[error("training diverged at step {step}")]
    Divergence { step: usize },

    #[error("mismatched sample counts: {left} vs {right}")]
    SampleCountMismatch { left: usize, right: usize },

    #[error("near-optimal set assumption violated: {0}")]
    AssumptionViolated(String),

    #[error("aggregate total variation is zero; gamma is undefined")]
    ZeroAggregateTv,

    #[error("fixed-point overflow: value {0} outside the representable range")]
    FixedPointOverflow(f64),

    #[error("HE error budget exceeded: {fresh} fresh ciphertexts summed, limit {limit}")]
    ErrorBudgetExceeded { fresh: u64, limit: u64 },

    #[error("mechanism failure at trial {trial}, round {round}: {source}")]
    Mechanism {
        trial: usize,
        round: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("missing regime: {0}")]
    MissingRegime(String),

    #[error("check requires a Gaussian release model: {0}")]
    NotGaussian(String),

    #[error("empty sweep grid")]
    EmptyGrid,

    #[error("invalid configuration at `{path}`: {message}")]
    Config { path: String, message: String },
}
