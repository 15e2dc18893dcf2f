use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("shape mismatch: {0}")]
    Mismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("parameters outside the lemma's hypothesis window: {0}")]
    Hypothesis(String),
    #[error("multiplier `{0}` declares no zero-frequency convention")]
    MissingZeroMode(String),
    #[error("flow map degenerate: J = {jacobian:e} at node {node}, sample {sample}")]
    FlowDegenerate {
        node: usize,
        sample: usize,
        jacobian: f64,
    },
    #[error("Neumann series diverges: pointwise |C| reaches {0}")]
    SeriesDiverges(f64),
    #[error("smallness certificate violated: {value:e} > {bound:e}")]
    Smallness { value: f64, bound: f64 },
    #[error("Lame operator not elliptic: alpha = {0:e}")]
    NotElliptic(f64),
    #[error("no admissible frequency threshold: {0}")]
    NoThreshold(String),
    #[error("explicit step dt = {dt:e} exceeds diffusive limit {limit:e}")]
    Cfl { dt: f64, limit: f64 },
    #[error("no admissible horizon: {0}")]
    NoHorizon(String),
    #[error("density lost positivity (min {min:e}) at sample {sample}")]
    Positivity { sample: usize, min: f64 },
    #[error("flow inversion stalled after {iterations} iterations (residual {residual:e})")]
    InversionFailed { iterations: usize, residual: f64 },
    #[error("Picard iteration failed: {0}")]
    Picard(String),
}
