use thiserror::Error;

use crate::fourier::TorusEmbedding;

pub type Result<T> = std::result::Result<T, Error>;

/// Best iterate carried by [`Error::NoConvergence`].
#[derive(Debug, Clone)]
pub struct BestIterate {
    pub torus: TorusEmbedding,
    pub lambda: Vec<f64>,
    pub error_norm: f64,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("analytic norm weight overflows at rho = {rho}")]
    NormOverflow { rho: f64 },

    #[error("right-hand side has nonzero average {0:e}")]
    NonzeroAverage(f64),

    #[error("resonant mode k = {k:?}: |1 - exp(2 pi i k.omega)| = {divisor:e}")]
    ResonantMode { k: Vec<i64>, divisor: f64 },

    #[error("frequency rejected: l = {l:?} makes l.omega an integer")]
    ZeroDivisor { l: Vec<i64> },

    #[error("degenerate torus at theta = {theta:?}: {condition} (condition number {cond:e})")]
    DegenerateTorus {
        theta: Vec<f64>,
        condition: String,
        cond: f64,
    },

    #[error("parameter response has rank {rank}, need {expected}")]
    RankDeficient { rank: usize, expected: usize },

    #[error("torus image leaves the map domain at theta = {theta:?} (y = {value})")]
    DomainEscape { theta: Vec<f64>, value: f64 },

    #[error("step rejected after {halvings} halvings (error {err_before:e} -> best {err_best:e})")]
    StepRejected {
        halvings: usize,
        err_before: f64,
        err_best: f64,
    },

    #[error("no convergence after {iterations} iterations (best error {:e})", best.error_norm)]
    NoConvergence {
        iterations: usize,
        best: Box<BestIterate>,
    },

    #[error("verification failed: {}", checks.join(", "))]
    VerificationFailed { checks: Vec<String> },

    #[error("tori not aligned: residual plateaued at {residual:e}")]
    NotAligned { residual: f64 },

    #[error("phase response matrix is singular (rank {rank})")]
    SingularResponse { rank: usize },

    #[error("tori too far apart for alignment: distance {distance:e} > threshold {threshold:e}")]
    TooFar { distance: f64, threshold: f64 },

    #[error("schema error at `{key}`: {message}")]
    Schema { key: String, message: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    /// Process exit code used by the command line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NoConvergence { .. }
            | Error::StepRejected { .. }
            | Error::NotAligned { .. }
            | Error::VerificationFailed { .. } => 2,
            Error::DegenerateTorus { .. }
            | Error::RankDeficient { .. }
            | Error::SingularResponse { .. }
            | Error::ResonantMode { .. } => 3,
            _ => 1,
        }
    }

    pub(crate) fn schema(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            key: key.into(),
            message: message.into(),
        }
    }
}
