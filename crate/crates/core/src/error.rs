use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("non-finite value in {what} at mode index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("truncation mismatch: expected N = {expected}, got N = {got}")]
    TruncationMismatch { expected: usize, got: usize },

    #[error("{what} is capped at {cap}, got {got}")]
    SizeCap {
        what: &'static str,
        cap: usize,
        got: usize,
    },

    #[error("blowup detected at t = {time}: H^s norm {norm:e} exceeds threshold {threshold:e}")]
    BlowupDetected {
        time: f64,
        norm: f64,
        threshold: f64,
    },

    #[error("integrator exceeded {max_steps} steps (reached t = {time})")]
    MaxStepsExceeded { max_steps: usize, time: f64 },

    #[error("step size underflow at t = {time}")]
    StepUnderflow { time: f64 },

    #[error("F_N imaginary residual {residual:e} exceeds tolerance")]
    ImaginaryResidual { residual: f64 },

    #[error("acceptance rate {rate:e} below 1e-3 ({accepted}/{count} draws in the L2 ball)")]
    LowAcceptance {
        rate: f64,
        accepted: usize,
        count: usize,
    },

    #[error("non-finite observable for seed {seed}, stream {stream}, index {index}")]
    NonFiniteObservable { seed: u64, stream: u64, index: u64 },

    #[error("Gibbs weight overflow (exponent {exponent:e} > 700) for seed {seed}, index {index}")]
    WeightOverflow {
        exponent: f64,
        seed: u64,
        index: u64,
    },

    #[error("non-finite finite difference in coordinate {coordinate}")]
    NonFiniteDifference { coordinate: usize },

    #[error("ill-conditioned Jacobian determinant {det:e}")]
    IllConditioned { det: f64 },

    #[error("predicate parse error: {0}")]
    Predicate(String),

    #[error("decode error: {0}")]
    Decode(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
