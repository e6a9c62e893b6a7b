//! Hierarchical equations of motion for open quantum systems coupled
//! linearly to bosonic or fermionic environments.
//!
//! The crate provides:
//!
//! * [`bcf`]: bath correlation functions as sums of exponential modes,
//!   including thermal correlation functions from pole spectral densities.
//! * [`indexset`]: hierarchy index enumeration, truncation and sign tables.
//! * [`noise`]: stationary complex Gaussian noise with prescribed correlation.
//! * [`hops`]: the bosonic stochastic hierarchy of pure states.
//! * [`master`]: the deterministic density-operator hierarchies.
//! * [`grassmann`]: an exact finite Grassmann algebra used to propagate the
//!   fermionic pure-state hierarchy and to verify its identities.
//! * [`oracle`]: brute-force system+bath propagation for small discrete baths.
//!
//! Everything is built on the shared [`integrate`] module and the domain types
//! in [`system`].

pub mod bcf;
pub mod error;
pub mod grassmann;
pub mod hops;
pub mod indexset;
pub mod integrate;
pub mod linalg;
pub mod master;
pub mod noise;
pub mod oracle;
pub mod series;
pub mod system;

pub use num_complex::Complex64 as C64;

pub use bcf::{Mode, ModeSet, PoleSpectralDensity, ThermalParams};
pub use error::{Error, Result};
pub use indexset::{IndexSpace, MultiIndex, Truncation};
pub use integrate::{integrate, integrate_with, Method, SolverOptions};
pub use linalg::CMatrix;
pub use series::DensitySeries;
pub use system::{validate_system, Statistics, SystemSpec, TimeGrid};

/// Imaginary unit.
pub const I: C64 = C64::new(0.0, 1.0);
