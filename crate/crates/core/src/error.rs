use thiserror::Error;

/// Errors raised by the grid, kernel, scheme and harness layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("grid size must be even and >= 16, got {0}")]
    OddGridSize(usize),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grids differ: {0}")]
    GridMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain too small: kernel tail mass {tail:.3e} outside the domain exceeds {tol:.3e}")]
    DomainTooSmall { tail: f64, tol: f64 },

    #[error("spectral tail too large: top-quartile energy fraction {fraction:.3e} exceeds {tol:.1e}")]
    SpectralTailTooLarge { fraction: f64, tol: f64 },

    #[error("negative density value {0} fed to the drift")]
    NegativeDensityInput(f64),

    #[error("drift {label} violates the boundedness/Lipschitz hypothesis: max |b| = {max_abs:.6}, max Lipschitz quotient = {max_lip:.6}, kappa = {kappa}")]
    DriftViolatesH {
        label: String,
        max_abs: f64,
        max_lip: f64,
        kappa: f64,
    },

    #[error("mass leak: clamped mass {leaked:.3e} exceeds tolerance {tol:.3e}")]
    MassLeak { leaked: f64, tol: f64 },

    #[error("CFL violation: dt = {dt} exceeds dx / kappa = {limit}")]
    CflViolation { dt: f64, limit: f64 },

    #[error("times must be strictly increasing and positive")]
    NonMonotoneTimes,

    #[error("reference too coarse: {0}")]
    ReferenceTooCoarse(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
