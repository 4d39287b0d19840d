use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Numerical(#[from] freemul_core::Error),
    #[error("dense eigensolver failed to converge")]
    DecompositionFailure,
    #[error("outlier {value} does not lie above the upper edge {edge}")]
    OutlierInsideBulk { value: f64, edge: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
}

impl Error {
    /// Process exit status: 1 for configuration and input problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical(_) | Error::DecompositionFailure | Error::OutlierInsideBulk { .. } => 2,
            Error::Config(_) | Error::Io { .. } | Error::Format { .. } => 1,
        }
    }

    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        use freemul_core::Error as E;
        match self {
            Error::Numerical(e) => match e {
                E::InvalidMeasure(_) => "InvalidMeasure",
                E::NonPositiveSample { .. } => "NonPositiveSample",
                E::SupportCollision { .. } => "SupportCollision",
                E::MTransformPole { .. } => "MTransformPole",
                E::NoConvergence { .. } => "NoConvergence",
                E::LeftAdmissibleRegion { .. } => "LeftAdmissibleRegion",
                E::BranchJump { .. } => "BranchJump",
                E::InvalidSchedule(_) => "InvalidSchedule",
                E::StabilityDegenerate { .. } => "StabilityDegenerate",
                E::EdgeBracketFailure => "EdgeBracketFailure",
                E::InversionOutOfRange { .. } => "InversionOutOfRange",
                E::SubcriticalTarget { .. } => "SubcriticalTarget",
                E::SubcriticalInS { .. } => "SubcriticalInS",
                E::InvalidModel(_) => "InvalidModel",
            },
            Error::DecompositionFailure => "DecompositionFailure",
            Error::OutlierInsideBulk { .. } => "OutlierInsideBulk",
            Error::Config(_) => "Config",
            Error::Io { .. } => "Io",
            Error::Format { .. } => "Format",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
