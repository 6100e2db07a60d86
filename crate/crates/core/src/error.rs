use std::path::PathBuf;

use crate::medium::PlacementReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("the measured patch has no faces")]
    EmptyGamma,

    #[error("inclusions {first} and {second} both claim voxel {voxel:?}")]
    Overlap { first: usize, second: usize, voxel: [usize; 3] },

    #[error("placement constraints violated: {0}")]
    Placement(PlacementReport),

    #[error("pivot ratio {ratio:e} below 1e-10: omega^2 sits on a discrete Dirichlet eigenvalue")]
    EigenvalueHit { ratio: f64 },

    #[error("operators live on different grids or patches: {0}")]
    GridMismatch(String),

    #[error("probe is degenerate: k = 0 and |l| = 0")]
    DegenerateProbe,

    #[error("exponent Re(x.rho) = {max_exponent:.1} overflows double precision")]
    Overflow { max_exponent: f64 },

    #[error("kernel quadrature refinements disagree: {coarse} vs {fine}")]
    QuadratureDiverged { coarse: String, fine: String },

    #[error("regularized system condition {condition:e} exceeds 1e12")]
    SingularSystem { condition: f64 },

    #[error("no peaks: max |I| = {max:e} below floor {floor:e}")]
    NoPeaks { max: f64, floor: f64 },

    #[error("exponential design matrix condition {condition:e} exceeds 1e10")]
    RankDeficient { condition: f64 },

    #[error("{failed} of {total} k-samples failed; first error: {first}")]
    ScanFailed { failed: usize, total: usize, first: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },

    #[error("config validation failed: {0}")]
    Validation(String),

    #[error("missing artifact {0}")]
    MissingArtifact(String),

    #[error("artifacts in {dir} carry different config hashes ({first} vs {second})")]
    MixedRun { dir: PathBuf, first: String, second: String },

    #[error("malformed artifact {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("verification failed: {0}")]
    Verification(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Validation(_) | Error::Placement(_) => 2,
            Error::Verification(_) => 4,
            _ => 3,
        }
    }

    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyGamma => "EmptyGamma",
            Error::Overlap { .. } => "OverlapError",
            Error::Placement(_) => "ValidationError",
            Error::EigenvalueHit { .. } => "EigenvalueHit",
            Error::GridMismatch(_) => "GridMismatch",
            Error::DegenerateProbe => "DegenerateProbe",
            Error::Overflow { .. } => "Overflow",
            Error::QuadratureDiverged { .. } => "QuadratureDiverged",
            Error::SingularSystem { .. } => "SingularSystem",
            Error::NoPeaks { .. } => "NoPeaks",
            Error::RankDeficient { .. } => "RankDeficient",
            Error::ScanFailed { .. } => "ScanFailed",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::Factorization(_) => "Factorization",
            Error::Parse { .. } => "ParseError",
            Error::Validation(_) => "ValidationError",
            Error::MissingArtifact(_) => "MissingArtifact",
            Error::MixedRun { .. } => "MixedRun",
            Error::Format { .. } => "FormatError",
            Error::Verification(_) => "VerificationFailure",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
        }
    }
}
