use num_complex::Complex64;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid measure: {0}")]
    InvalidMeasure(&'static str),

    #[error("sample value {value} is not strictly positive")]
    NonPositiveSample { value: f64 },

    #[error("spectral argument {z} collides with the support")]
    SupportCollision { z: Complex64 },

    #[error("M-transform has a pole at {z} (|1 + z m(z)| too small)")]
    MTransformPole { z: Complex64 },

    #[error("no convergence at z = {z} after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        z: Complex64,
        iterations: usize,
        residual: f64,
    },

    #[error("iterate left the admissible region at z = {z}")]
    LeftAdmissibleRegion { z: Complex64 },

    #[error("continuation jumped by {jump:e} between eta = {eta_from:e} and eta = {eta_to:e}")]
    BranchJump {
        eta_from: f64,
        eta_to: f64,
        jump: f64,
    },

    #[error("invalid eta schedule: {0}")]
    InvalidSchedule(&'static str),

    #[error("stability function degenerate: |S_AB| = {modulus:e}")]
    StabilityDegenerate { modulus: f64 },

    #[error("edge bracket failure: no critical point of the edge parametrization found")]
    EdgeBracketFailure,

    #[error("value {value} is outside the range of the real M-transform branch")]
    InversionOutOfRange { value: f64 },

    #[error("target {target} is not above the edge threshold {threshold}")]
    SubcriticalTarget { target: f64, threshold: f64 },

    #[error("label rank {rank} is not a supercritical outlier")]
    SubcriticalInS { rank: usize },

    #[error("invalid spiked model: {0}")]
    InvalidModel(&'static str),
}
