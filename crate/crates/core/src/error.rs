use std::path::PathBuf;

/// Errors raised anywhere in the simulator.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error("envelope has no populated sites")]
    EmptySupport,

    #[error("envelope half width {half_width} exceeds the lattice half size {lattice_half}")]
    SupportOverflow { half_width: f64, lattice_half: i64 },

    #[error("lattice depth {0} E_R is too shallow for the tight-binding estimate (need s >= 1)")]
    ShallowLattice(f64),

    #[error("tilt is disabled; Bloch period is undefined")]
    TiltDisabled,

    #[error("trap frequency must be positive")]
    ZeroFrequency,

    #[error("momentum density is identically zero")]
    ZeroDensity,

    #[error("time step {dt:e} s exceeds the phase-resolution limit {limit:e} s")]
    StepTooLarge { dt: f64, limit: f64 },

    #[error("norm drifted by {drift:e} at t = {t:e} s")]
    NormDrift { drift: f64, t: f64 },

    #[error("ensemble is empty")]
    EmptyEnsemble,

    #[error("gaussian fit needs at least 5 points, got {0}")]
    InsufficientData(usize),

    #[error("data are constant; nothing to fit")]
    DegenerateData,

    #[error("gaussian fit did not converge after {0} iterations")]
    NonConvergence(usize),

    #[error("fitted revival at {center:e} s is not inside the scan window [{start:e}, {end:e}] s")]
    WindowMiss { center: f64, start: f64, end: f64 },

    #[error("anharmonic study needs a gaussian trap")]
    WrongTrapKind,

    #[error("carpet has no rows")]
    EmptyCarpet,

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
