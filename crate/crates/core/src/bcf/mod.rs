//! Bath correlation functions.
//!
//! A correlation function is represented as a sum of exponential [`Mode`]s,
//! `alpha(t) = sum_j g_j exp(-w_j t)` for `t >= 0`. Modes come from discrete
//! baths ([`discrete_bath_modes`]) or from a pole spectral density at finite
//! temperature ([`residue_expand`]); [`thermal_bcf_quadrature`] evaluates the
//! defining integrals directly and serves as the reference.

mod poles;
mod quadrature;
mod spectral;

pub use poles::{
    bcf_convergence, merged_fermionic_modes, residue_expand, sum_over_poles, ConvergenceRow,
    Scheme, SumOverPoles,
};
pub use quadrature::{exp_integral_e1, thermal_bcf_quadrature, BcfKind};
pub use spectral::{PoleSpectralDensity, ThermalParams};

use crate::error::{Error, Result};
use crate::C64;

/// One exponential term `g exp(-w t)` with `w = gamma + i Omega`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub g: C64,
    pub w: C64,
}

impl Mode {
    /// Rejects growing modes (`Re w < 0`).
    pub fn new(g: C64, w: C64) -> Result<Self> {
        if w.re < 0.0 || !w.re.is_finite() || !w.im.is_finite() {
            return Err(Error::GrowingMode(w.re));
        }
        Ok(Self { g, w })
    }

    pub fn eval(&self, t: f64) -> C64 {
        self.g * (-self.w * t).exp()
    }

    /// `(Re g, Im g, Re w, Im w)`, the serialized form used in config files.
    pub fn to_quad(&self) -> [f64; 4] {
        [self.g.re, self.g.im, self.w.re, self.w.im]
    }

    pub fn from_quad(q: [f64; 4]) -> Result<Self> {
        Self::new(C64::new(q[0], q[1]), C64::new(q[2], q[3]))
    }
}

/// Evaluates `sum_j g_j exp(-w_j t)` for `t >= 0`.
pub fn eval_modes(modes: &[Mode], t: f64) -> Result<C64> {
    if t < 0.0 {
        return Err(Error::NegativeTime(t));
    }
    Ok(modes.iter().map(|m| m.eval(t)).sum())
}

/// Two-sided evaluation using `alpha(-t) = conj(alpha(t))`.
pub fn eval_modes_two_sided(modes: &[Mode], t: f64) -> C64 {
    let v: C64 = modes.iter().map(|m| m.eval(t.abs())).sum();
    if t < 0.0 {
        v.conj()
    } else {
        v
    }
}

/// Modes of a discrete bath: `alpha(t) = sum |g|^2 exp(-i omega t)`.
pub fn discrete_bath_modes(couplings: &[C64], frequencies: &[f64]) -> Result<Vec<Mode>> {
    if couplings.len() != frequencies.len() || couplings.is_empty() {
        return Err(Error::LengthMismatch(couplings.len(), frequencies.len()));
    }
    Ok(couplings
        .iter()
        .zip(frequencies)
        .map(|(g, &w)| Mode {
            g: C64::new(g.norm_sqr(), 0.0),
            w: C64::new(0.0, w),
        })
        .collect())
}

/// Per-channel mode lists.
///
/// Hierarchies assign one hierarchy dimension per mode; [`ModeSet::flatten`]
/// lists `(channel, mode)` pairs in channel-major order, which is the
/// hierarchy-dimension order used everywhere.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModeSet {
    pub channels: Vec<Vec<Mode>>,
}

impl ModeSet {
    pub fn new(channels: Vec<Vec<Mode>>) -> Self {
        Self { channels }
    }

    /// One channel per mode list, each a single mode.
    pub fn single(modes: Vec<Mode>) -> Self {
        Self {
            channels: modes.into_iter().map(|m| vec![m]).collect(),
        }
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn n_modes(&self) -> usize {
        self.channels.iter().map(Vec::len).sum()
    }

    pub fn flatten(&self) -> Vec<(usize, Mode)> {
        self.channels
            .iter()
            .enumerate()
            .flat_map(|(j, ms)| ms.iter().map(move |&m| (j, m)))
            .collect()
    }

    pub fn min_damping(&self) -> f64 {
        self.channels
            .iter()
            .flatten()
            .map(|m| m.w.re)
            .fold(f64::INFINITY, f64::min)
    }
}
