use nalgebra::DMatrix;
use std::f64::consts::PI;

use super::quadrature::{thermal_bcf_quadrature, BcfKind};
use super::spectral::{PoleSpectralDensity, ThermalParams};
use super::{eval_modes, Mode};
use crate::error::{Error, Result};
use crate::C64;

/// Pole scheme for `tanh(w / 2T)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    Matsubara,
    #[default]
    Pade,
}

/// Odd rational approximant of `tanh(w / 2T)`.
///
/// Each stored `(p, r)` with `Im p > 0` stands for the pair of terms
/// `r/(w - p) + r/(w + p)`. The Fermi function follows as
/// `n(w) = (1 - tanh((w - mu)/2T)) / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SumOverPoles {
    pub poles: Vec<(C64, C64)>,
}

impl SumOverPoles {
    pub fn eval(&self, w: C64) -> C64 {
        self.poles
            .iter()
            .map(|&(p, r)| r / (w - p) + r / (w + p))
            .sum()
    }

    /// Max error against `tanh(w/2T)` on an even grid of `[-20T, 20T]`.
    pub fn max_error(&self, temperature: f64) -> f64 {
        let n = 4001;
        (0..n)
            .map(|i| {
                let w = temperature * (-20.0 + 40.0 * i as f64 / (n - 1) as f64);
                (self.eval(C64::new(w, 0.0)).re - (w / (2.0 * temperature)).tanh()).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Returns `count` upper-half-plane poles with residues; the mirrored poles
/// at `-p` carry the same residues.
pub fn sum_over_poles(th: &ThermalParams, scheme: Scheme, count: usize) -> Result<SumOverPoles> {
    let t = th.temperature;
    if !(t > 0.0) {
        return Err(Error::ZeroTemperature);
    }
    let poles = match scheme {
        Scheme::Matsubara => (0..count)
            .map(|n| (C64::new(0.0, PI * t * (2 * n + 1) as f64), C64::new(2.0 * t, 0.0)))
            .collect(),
        Scheme::Pade => pade_tanh(count)?
            .into_iter()
            .map(|(z, r)| (z * (2.0 * t), r * (2.0 * t)))
            .collect(),
    };
    Ok(SumOverPoles { poles })
}

/// `[N-1/N]` Pade approximant of `tanh z` from the continued fraction
/// `z/(1 + z^2/(3 + z^2/(5 + ...)))`, truncated after `2N` levels.
///
/// The denominator roots are `z = +- i/lambda` with `lambda` the positive
/// eigenvalues of the tridiagonal matrix with off-diagonal
/// `1/sqrt((2m-1)(2m+1))`; residues are `A(z)/B'(z)` from the recurrence.
fn pade_tanh(n: usize) -> Result<Vec<(C64, C64)>> {
    if n == 0 {
        return Ok(vec![]);
    }
    let m = 2 * n;
    let mut tri = DMatrix::<f64>::zeros(m, m);
    for k in 1..m {
        let v = 1.0 / (((2 * k - 1) * (2 * k + 1)) as f64).sqrt();
        tri[(k - 1, k)] = v;
        tri[(k, k - 1)] = v;
    }
    let eig = tri.symmetric_eigen();
    let mut lam: Vec<f64> = eig.eigenvalues.iter().copied().filter(|&x| x > 0.0).collect();
    if lam.len() != n || lam.iter().any(|x| !x.is_finite()) {
        return Err(Error::EigDecompositionFailed(format!(
            "expected {n} positive eigenvalues, found {}",
            lam.len()
        )));
    }
    lam.sort_by(|a, b| b.total_cmp(a));
    lam.into_iter()
        .map(|l| {
            let z = C64::new(0.0, 1.0 / l);
            let (a, db) = convergent_with_derivative(z, m);
            let r = a / db;
            if !r.re.is_finite() || !r.im.is_finite() {
                return Err(Error::EigDecompositionFailed("non-finite residue".into()));
            }
            Ok((z, r))
        })
        .collect()
}

/// `(A_m(z), B_m'(z))` of the tanh continued fraction, rescaled together.
fn convergent_with_derivative(z: C64, m: usize) -> (C64, C64) {
    let zero = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    // (prev, cur) for A, B, B'
    let (mut a0, mut a1) = (one, zero);
    let (mut b0, mut b1) = (zero, one);
    let (mut d0, mut d1) = (zero, zero);
    for k in 1..=m {
        let bk = (2 * k - 1) as f64;
        let (ak, dak) = if k == 1 { (z, one) } else { (z * z, 2.0 * z) };
        let a2 = a1 * bk + a0 * ak;
        let b2 = b1 * bk + b0 * ak;
        let d2 = d1 * bk + d0 * ak + b0 * dak;
        a0 = a1;
        a1 = a2;
        b0 = b1;
        b1 = b2;
        d0 = d1;
        d1 = d2;
        let s = a1.norm().max(b1.norm()).max(d1.norm());
        if s > 1e100 {
            for x in [&mut a0, &mut a1, &mut b0, &mut b1, &mut d0, &mut d1] {
                *x /= s;
            }
        }
    }
    (a1, d1)
}

fn check_density(j: &PoleSpectralDensity) -> Result<()> {
    for (i, &(p, _)) in j.poles.iter().enumerate() {
        if p.im.abs() <= 1e-12 * (1.0 + p.norm()) {
            return Err(Error::PoleOnRealAxis(p));
        }
        for &(q, _) in &j.poles[..i] {
            if (p - q).norm() <= 1e-10 * (1.0 + p.norm()) {
                return Err(Error::DegeneratePoles(p));
            }
        }
    }
    let odd = j.odd_residual();
    if odd > 1e-10 {
        return Err(Error::NotEven(odd));
    }
    Ok(())
}

/// Exponential modes of `alpha(t) = int_0^inf J(w) (cos wt - i tanh(w/2T) sin wt) dw`.
///
/// `J` must be even in `w`, so that the integral extends to the whole axis as
/// `1/2 int J(w)(1 + tau(w)) exp(-iwt)`, with `tau` the pole approximant of
/// the hyperbolic tangent. Closing in the lower half plane picks up the lower
/// poles of `J` and the mirrored approximant poles `-p_k`.
///
/// `count = 0` drops the approximant entirely (`tau = 0`), which is the
/// high-temperature cosine-transform limit.
pub fn residue_expand(
    j: &PoleSpectralDensity,
    th: &ThermalParams,
    scheme: Scheme,
    count: usize,
) -> Result<Vec<Mode>> {
    check_density(j)?;
    let sop = if count == 0 {
        SumOverPoles { poles: vec![] }
    } else {
        sum_over_poles(th, scheme, count)?
    };
    for &(pk, _) in &sop.poles {
        for &(p, _) in &j.poles {
            if (p + pk).norm() <= 1e-8 * (1.0 + p.norm()) {
                return Err(Error::DegeneratePoles(p));
            }
        }
    }
    let neg_i_pi = C64::new(0.0, -PI);
    let mut modes = Vec::new();
    for &(p, r) in &j.poles {
        if p.im < 0.0 {
            let g = neg_i_pi * r * (1.0 + sop.eval(p));
            modes.push(Mode::new(g, C64::new(0.0, 1.0) * p)?);
        }
    }
    for &(pk, rk) in &sop.poles {
        let g = neg_i_pi * j.eval_complex(-pk) * rk;
        modes.push(Mode::new(g, C64::new(0.0, -1.0) * pk)?);
    }
    Ok(modes)
}

/// Merged fermionic correlation `alpha + beta` for self-adjoint couplings.
///
/// At zero chemical potential the sum equals the spin-bath correlation and is
/// expanded by [`residue_expand`]. Non-self-adjoint couplings keep the two
/// correlations separate and are rejected here, as is `mu != 0`, for which
/// the merged thermal factor is `tanh((w - mu)/2T)` and the even continuation
/// no longer applies.
pub fn merged_fermionic_modes(
    j: &PoleSpectralDensity,
    th: &ThermalParams,
    scheme: Scheme,
    count: usize,
    self_adjoint: bool,
) -> Result<Vec<Mode>> {
    if !self_adjoint {
        return Err(Error::StatisticsMismatch(
            "alpha and beta can only be merged for self-adjoint couplings".into(),
        ));
    }
    if th.chemical_potential != 0.0 {
        return Err(Error::StatisticsMismatch(format!(
            "merged expansion needs mu = 0, got {}",
            th.chemical_potential
        )));
    }
    residue_expand(j, th, scheme, count)
}

/// One row of a pole-count convergence report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub count: usize,
    pub n_modes: usize,
    pub max_abs_error: f64,
    /// `max_abs_error / max_t |alpha(t)|`
    pub rel_error: f64,
}

/// Compares [`residue_expand`] against [`thermal_bcf_quadrature`] on `times`.
pub fn bcf_convergence(
    j: &PoleSpectralDensity,
    th: &ThermalParams,
    scheme: Scheme,
    counts: &[usize],
    times: &[f64],
) -> Result<Vec<ConvergenceRow>> {
    let reference = times
        .iter()
        .map(|&t| thermal_bcf_quadrature(j, th, BcfKind::SpinBathAlpha, t))
        .collect::<Result<Vec<_>>>()?;
    let norm = reference.iter().map(|v| v.norm()).fold(0.0, f64::max);
    counts
        .iter()
        .map(|&count| {
            let modes = residue_expand(j, th, scheme, count)?;
            let mut err: f64 = 0.0;
            for (&t, r) in times.iter().zip(&reference) {
                err = err.max((eval_modes(&modes, t)? - r).norm());
            }
            Ok(ConvergenceRow {
                count,
                n_modes: modes.len(),
                max_abs_error: err,
                rel_error: err / norm.max(f64::MIN_POSITIVE),
            })
        })
        .collect()
}
