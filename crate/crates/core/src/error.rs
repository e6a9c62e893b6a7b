use thiserror::Error;
use crate::C64;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    // system
    #[error("hamiltonian is not hermitian (max |H - H^dag| = {0:e})")]
    NonHermitianHamiltonian(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("at least one coupling operator is required")]
    EmptyCouplings,
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    // integration
    #[error("adaptive step fell below {min:e} at t = {t}")]
    StepUnderflow { t: f64, min: f64 },
    #[error("non-finite state encountered at t = {0}")]
    NonFiniteState(f64),
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),

    // bcf
    #[error("correlation function requested at negative time {0}")]
    NegativeTime(f64),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("quadrature did not converge: {0}")]
    QuadratureNotConverged(String),
    #[error("sum-over-poles expansion needs a positive temperature")]
    ZeroTemperature,
    #[error("eigen decomposition failed: {0}")]
    EigDecompositionFailed(String),
    #[error("spectral density pole {0} lies on the real axis")]
    PoleOnRealAxis(C64),
    #[error("spectral density has coinciding poles near {0}")]
    DegeneratePoles(C64),
    #[error("spectral density is not even in frequency (residual {0:e})")]
    NotEven(f64),
    #[error("spectral density is unphysical: {0}")]
    UnphysicalSpectralDensity(String),
    #[error("mode has growing correlation: Re(w) = {0}")]
    GrowingMode(f64),

    // indexset
    #[error("hierarchy index space too large ({0} indices)")]
    SpaceTooLarge(usize),
    #[error("invalid truncation: {0}")]
    InvalidTruncation(String),
    #[error("bosonic hierarchies need a depth or energy truncation with finite bounds")]
    BosonicUntruncated,

    // noise
    #[error("noise spectrum significantly negative (min {min:e}, max {max:e})")]
    SpectrumSignificantlyNegative { min: f64, max: f64 },
    #[error("noise generation needs damped modes (Re w > 0)")]
    UndampedMode,
    #[error("noise paths live on different grids")]
    GridMismatch,

    // hops / master
    #[error("need at least {needed} trajectories, got {got}")]
    InsufficientTrajectories { needed: usize, got: usize },
    #[error("statistics mismatch: {0}")]
    StatisticsMismatch(String),
    #[error("channel count mismatch: system has {system}, modes for {modes}")]
    ChannelMismatch { system: usize, modes: usize },

    // grassmann
    #[error("too many Grassmann generators ({0}, limit 24)")]
    TooManyGenerators(usize),
    #[error("elements belong to different algebras ({0} vs {1} generators)")]
    AlgebraMismatch(usize, usize),
    #[error("Gaussian expectation needs paired generators, got {0}")]
    UnpairedGenerators(usize),

    // oracle
    #[error("oracle dimension {0} exceeds guard {1}")]
    DimensionGuard(usize, usize),
}

impl Error {
    /// True for errors raised by size guards rather than by bad input or
    /// numerical failure.
    pub fn is_guard(&self) -> bool {
        matches!(
            self,
            Error::SpaceTooLarge(_) | Error::TooManyGenerators(_) | Error::DimensionGuard(..)
        )
    }

    /// True for errors raised while integrating or decomposing.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::StepUnderflow { .. }
                | Error::NonFiniteState(_)
                | Error::QuadratureNotConverged(_)
                | Error::EigDecompositionFailed(_)
                | Error::SpectrumSignificantlyNegative { .. }
        )
    }
}
