//! Shared domain types: the system specification and the time grid.

use crate::error::{Error, Result};
use crate::linalg::{hermiticity_residual, CMatrix};

/// Hermiticity tolerance applied by [`validate_system`].
pub const HERMITICITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Statistics {
    Bosonic,
    Fermionic,
}

/// System Hamiltonian `H` and coupling operators `L_j` (units with hbar = 1).
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub dim: usize,
    pub hamiltonian: CMatrix,
    pub couplings: Vec<CMatrix>,
    pub statistics: Statistics,
}

impl SystemSpec {
    pub fn new(hamiltonian: CMatrix, couplings: Vec<CMatrix>, statistics: Statistics) -> Self {
        Self {
            dim: hamiltonian.nrows(),
            hamiltonian,
            couplings,
            statistics,
        }
    }

    pub fn channels(&self) -> usize {
        self.couplings.len()
    }

    /// True if every coupling operator is self-adjoint to within the
    /// hermiticity tolerance.
    pub fn self_adjoint_couplings(&self) -> bool {
        self.couplings
            .iter()
            .all(|l| hermiticity_residual(l) <= HERMITICITY_TOL)
    }
}

/// Checks shape and hermiticity invariants and hands the spec back unchanged.
pub fn validate_system(spec: SystemSpec) -> Result<SystemSpec> {
    let d = spec.dim;
    if d == 0 || spec.hamiltonian.shape() != (d, d) {
        return Err(Error::DimensionMismatch(format!(
            "hamiltonian is {:?}, dim {d}",
            spec.hamiltonian.shape()
        )));
    }
    if spec.couplings.is_empty() {
        return Err(Error::EmptyCouplings);
    }
    for (j, l) in spec.couplings.iter().enumerate() {
        if l.shape() != (d, d) {
            return Err(Error::DimensionMismatch(format!(
                "coupling {j} is {:?}, expected ({d}, {d})",
                l.shape()
            )));
        }
    }
    let res = hermiticity_residual(&spec.hamiltonian);
    if res > HERMITICITY_TOL {
        return Err(Error::NonHermitianHamiltonian(res));
    }
    Ok(spec)
}

/// Uniform time grid with `steps` intervals on `[t0, t1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t0: f64,
    pub t1: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t1: f64, steps: usize) -> Result<Self> {
        let g = Self { t0, t1, steps };
        g.check()?;
        Ok(g)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.t1 > self.t0) || !self.t0.is_finite() || !self.t1.is_finite() {
            return Err(Error::InvalidGrid(format!("t1 = {} <= t0 = {}", self.t1, self.t0)));
        }
        if self.steps == 0 {
            return Err(Error::InvalidGrid("zero steps".into()));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        (self.t1 - self.t0) / self.steps as f64
    }

    /// Number of grid points, `steps + 1`.
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn time(&self, i: usize) -> f64 {
        if i == self.steps {
            self.t1
        } else {
            self.t0 + i as f64 * self.dt()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.time(i)).collect()
    }
}
