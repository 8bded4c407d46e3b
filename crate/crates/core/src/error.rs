use thiserror::Error;

/// Errors raised by kernel evaluation, measure construction, the solver and
/// the Monte Carlo sampler.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("grid error: {0}")]
    Grid(String),
    #[error("kernel is not stationary: {0}")]
    Stationarity(String),
    #[error("singular point: {0}")]
    Singularity(String),
    #[error("invalid interval: {0}")]
    Interval(String),
    #[error("assumption violated: {0}")]
    Assumption(String),
    #[error("degenerate kernel: {0}")]
    DegenerateKernel(String),
    #[error("invalid measure: {0}")]
    Measure(String),
    #[error("every atom was pruned")]
    EmptyMeasure,
    #[error("process is not pinned at the origin: variance at 0 is {0:e}")]
    PinnedOrigin(f64),
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("malformed input: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
