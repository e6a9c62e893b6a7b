//! Brute-force reference: the system coupled to a small discrete bath,
//! propagated as one closed system from `psi_0 (x) |vacuum>` and traced over
//! the bath.
//!
//! `H_tot = H (x) 1 + sum_l w_l b_l^dag b_l + sum_l (conj(g_l) L_c(l) (x) b_l^dag + g_l L_c(l)^dag (x) b_l)`.
//!
//! Fermionic bath operators carry a Jordan-Wigner string over the bath modes
//! only, so they anticommute among themselves and commute with every system
//! operator. Basis states are `a * B + beta` with `a` the system index and
//! `beta` the bath occupation (bit `l` is mode `l` for fermions, mixed radix
//! `n_max + 1` for bosons).

use crate::bcf::{discrete_bath_modes, ModeSet};
use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::series::DensitySeries;
use crate::system::{Statistics, SystemSpec, TimeGrid};
use crate::C64;
use crate::integrate::{integrate_with, SolverOptions};

/// Total Hilbert-space dimension limit.
pub const DIMENSION_GUARD: usize = 1 << 22;
/// Above this dimension the propagation uses the integrator instead of a
/// full eigendecomposition.
pub const DENSE_LIMIT: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteChannel {
    pub couplings: Vec<C64>,
    pub frequencies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteBathSpec {
    pub channels: Vec<DiscreteChannel>,
    pub statistics: Statistics,
    /// Fock cutoff per bosonic mode (ignored for fermions).
    pub n_max: usize,
}

impl DiscreteBathSpec {
    pub fn n_modes(&self) -> usize {
        self.channels.iter().map(|c| c.couplings.len()).sum()
    }

    fn local_dim(&self) -> usize {
        match self.statistics {
            Statistics::Fermionic => 2,
            Statistics::Bosonic => self.n_max + 1,
        }
    }

    /// Bath dimension, or `None` on overflow.
    pub fn bath_dim(&self) -> Option<usize> {
        let mut b: usize = 1;
        for _ in 0..self.n_modes() {
            b = b.checked_mul(self.local_dim())?;
        }
        Some(b)
    }

    /// `(channel, coupling, frequency)` per mode, channel-major.
    fn flat(&self) -> Vec<(usize, C64, f64)> {
        self.channels
            .iter()
            .enumerate()
            .flat_map(|(j, c)| {
                c.couplings
                    .iter()
                    .zip(&c.frequencies)
                    .map(move |(&g, &w)| (j, g, w))
            })
            .collect()
    }
}

/// Per-channel exponential modes of the bath, for the hierarchies.
pub fn bath_to_modes(bath: &DiscreteBathSpec) -> Result<ModeSet> {
    Ok(ModeSet::new(
        bath.channels
            .iter()
            .map(|c| discrete_bath_modes(&c.couplings, &c.frequencies))
            .collect::<Result<_>>()?,
    ))
}

/// Propagation method of the oracle.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum OracleMethod {
    /// Eigendecomposition up to [`DENSE_LIMIT`], integrator above.
    #[default]
    Auto,
    Eigen,
    Integrate(SolverOptions),
}

#[derive(Debug, Clone)]
pub struct OracleOutput {
    pub series: DensitySeries,
    /// `max_t | <Psi|Psi> - <Psi_0|Psi_0> |`
    pub norm_drift: f64,
    pub dimension: usize,
}

/// Sparse Hermitian matrix in coordinate form, row-sorted.
#[derive(Debug, Clone)]
pub struct SparseH {
    pub dim: usize,
    pub entries: Vec<(usize, usize, C64)>,
}

impl SparseH {
    pub fn apply(&self, x: &[C64], y: &mut [C64], alpha: C64) {
        for &(r, c, v) in &self.entries {
            y[r] += alpha * v * x[c];
        }
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut m = CMatrix::zeros(self.dim, self.dim);
        for &(r, c, v) in &self.entries {
            m[(r, c)] += v;
        }
        m
    }
}

/// Action of `b_l` on a bath basis state: `Some((sign or sqrt(n), new state))`.
fn lower(bath: &DiscreteBathSpec, beta: usize, l: usize) -> Option<(f64, usize)> {
    match bath.statistics {
        Statistics::Fermionic => {
            if beta >> l & 1 == 0 {
                return None;
            }
            let sign = if (beta & ((1 << l) - 1)).count_ones().is_multiple_of(2) { 1.0 } else { -1.0 };
            Some((sign, beta & !(1 << l)))
        }
        Statistics::Bosonic => {
            let base = bath.n_max + 1;
            let stride = base.pow(l as u32);
            let n = beta / stride % base;
            (n > 0).then(|| ((n as f64).sqrt(), beta - stride))
        }
    }
}

fn occupation(bath: &DiscreteBathSpec, beta: usize, l: usize) -> f64 {
    match bath.statistics {
        Statistics::Fermionic => (beta >> l & 1) as f64,
        Statistics::Bosonic => {
            let base = bath.n_max + 1;
            (beta / base.pow(l as u32) % base) as f64
        }
    }
}

fn check_dims(spec: &SystemSpec, bath: &DiscreteBathSpec) -> Result<(usize, usize)> {
    if bath.statistics != spec.statistics {
        return Err(Error::StatisticsMismatch(format!(
            "system is {:?}, bath is {:?}",
            spec.statistics, bath.statistics
        )));
    }
    if bath.channels.len() != spec.channels() {
        return Err(Error::ChannelMismatch {
            system: spec.channels(),
            modes: bath.channels.len(),
        });
    }
    for c in &bath.channels {
        if c.couplings.len() != c.frequencies.len() {
            return Err(Error::LengthMismatch(c.couplings.len(), c.frequencies.len()));
        }
    }
    let b = bath.bath_dim().unwrap_or(usize::MAX);
    let total = b.saturating_mul(spec.dim);
    if total > DIMENSION_GUARD {
        return Err(Error::DimensionGuard(total, DIMENSION_GUARD));
    }
    Ok((b, total))
}

/// Total Hamiltonian in sparse form.
pub fn total_hamiltonian(spec: &SystemSpec, bath: &DiscreteBathSpec) -> Result<SparseH> {
    let (nb, total) = check_dims(spec, bath)?;
    let d = spec.dim;
    let flat = bath.flat();
    let mut e: Vec<(usize, usize, C64)> = vec![];
    for a in 0..d {
        for a2 in 0..d {
            let h = spec.hamiltonian[(a, a2)];
            if h != C64::new(0.0, 0.0) {
                for beta in 0..nb {
                    e.push((a * nb + beta, a2 * nb + beta, h));
                }
            }
        }
    }
    for beta in 0..nb {
        let energy: f64 = flat
            .iter()
            .enumerate()
            .map(|(l, &(_, _, w))| w * occupation(bath, beta, l))
            .sum();
        if energy != 0.0 {
            for a in 0..d {
                e.push((a * nb + beta, a * nb + beta, C64::new(energy, 0.0)));
            }
        }
    }
    for (l, &(c, g, _)) in flat.iter().enumerate() {
        let op = &spec.couplings[c];
        for beta in 0..nb {
            // g L^dag (x) b : |a2, beta> -> |a, beta'>
            if let Some((s, lowered)) = lower(bath, beta, l) {
                for a in 0..d {
                    for a2 in 0..d {
                        // (L^dag)_{a a2} = conj(L_{a2 a})
                        let ld = op[(a2, a)].conj();
                        if ld != C64::new(0.0, 0.0) {
                            let v = g * ld * s;
                            e.push((a * nb + lowered, a2 * nb + beta, v));
                            // hermitian partner: conj(g) L (x) b^dag
                            e.push((a2 * nb + beta, a * nb + lowered, v.conj()));
                        }
                    }
                }
            }
        }
    }
    e.sort_by_key(|&(r, c, _)| (r, c));
    let mut merged: Vec<(usize, usize, C64)> = Vec::with_capacity(e.len());
    for (r, c, v) in e {
        match merged.last_mut() {
            Some(last) if last.0 == r && last.1 == c => last.2 += v,
            _ => merged.push((r, c, v)),
        }
    }
    merged.retain(|x| x.2 != C64::new(0.0, 0.0));
    Ok(SparseH { dim: total, entries: merged })
}

fn reduce(psi: &[C64], d: usize, nb: usize) -> CMatrix {
    CMatrix::from_fn(d, d, |a, b| {
        (0..nb).map(|beta| psi[a * nb + beta] * psi[b * nb + beta].conj()).sum()
    })
}

/// Exact reduced dynamics from `psi_0 (x) |vacuum>`.
pub fn exact_propagate(
    spec: &SystemSpec,
    bath: &DiscreteBathSpec,
    psi0: &[C64],
    grid: &TimeGrid,
    method: OracleMethod,
) -> Result<OracleOutput> {
    grid.check()?;
    if psi0.len() != spec.dim {
        return Err(Error::LengthMismatch(psi0.len(), spec.dim));
    }
    let h = total_hamiltonian(spec, bath)?;
    let (d, n) = (spec.dim, h.dim);
    let nb = n / d;
    let mut start = vec![C64::new(0.0, 0.0); n];
    for a in 0..d {
        start[a * nb] = psi0[a];
    }
    let norm0: f64 = start.iter().map(|x| x.norm_sqr()).sum();
    let mut rho = Vec::with_capacity(grid.len());
    let mut drift: f64 = 0.0;
    let mut record = |psi: &[C64]| {
        let nn: f64 = psi.iter().map(|x| x.norm_sqr()).sum();
        drift = drift.max((nn - norm0).abs());
        rho.push(reduce(psi, d, nb));
    };
    let use_eigen = match method {
        OracleMethod::Auto => n <= DENSE_LIMIT,
        OracleMethod::Eigen => true,
        OracleMethod::Integrate(_) => false,
    };
    if use_eigen {
        let eig = h.to_dense().symmetric_eigen();
        let v = &eig.eigenvectors;
        let c0 = v.adjoint() * nalgebra::DVector::from_vec(start);
        for t in grid.times() {
            let ct = nalgebra::DVector::from_fn(n, |i, _| {
                c0[i] * C64::from_polar(1.0, -eig.eigenvalues[i] * (t - grid.t0))
            });
            let psi = v * ct;
            record(psi.as_slice());
        }
    } else {
        let opts = match method {
            OracleMethod::Integrate(o) => o,
            _ => SolverOptions::default(),
        };
        integrate_with(
            |_, y, dy| {
                dy.fill(C64::new(0.0, 0.0));
                h.apply(y, dy, C64::new(0.0, -1.0));
            },
            &start,
            grid,
            &opts,
            |_, _, y| record(y),
        )?;
    }
    Ok(OracleOutput {
        series: DensitySeries::new(grid.times(), rho),
        norm_drift: drift,
        dimension: n,
    })
}

/// Bosonic oracle with the Fock cutoff raised from `bath.n_max` until one
/// more level changes `rho(t)` by less than `tol`. Returns the output at the
/// accepted cutoff and the last change.
pub fn exact_propagate_converged(
    spec: &SystemSpec,
    bath: &DiscreteBathSpec,
    psi0: &[C64],
    grid: &TimeGrid,
    tol: f64,
) -> Result<(OracleOutput, usize, f64)> {
    let mut b = bath.clone();
    let mut prev = exact_propagate(spec, &b, psi0, grid, OracleMethod::Auto)?;
    if b.statistics == Statistics::Fermionic {
        return Ok((prev, 0, 0.0));
    }
    loop {
        b.n_max += 1;
        let next = exact_propagate(spec, &b, psi0, grid, OracleMethod::Auto)?;
        let change = prev.series.max_deviation(&next.series);
        if change < tol {
            return Ok((prev, b.n_max - 1, change));
        }
        prev = next;
    }
}

/// Dense Jordan-Wigner annihilators of `m` fermionic modes in the bit basis.
pub fn fermion_annihilators(m: usize) -> Vec<CMatrix> {
    let bath = DiscreteBathSpec {
        channels: vec![],
        statistics: Statistics::Fermionic,
        n_max: 1,
    };
    let nb = 1usize << m;
    (0..m)
        .map(|l| {
            let mut b = CMatrix::zeros(nb, nb);
            for beta in 0..nb {
                if let Some((s, to)) = lower(&bath, beta, l) {
                    b[(to, beta)] = C64::new(s, 0.0);
                }
            }
            b
        })
        .collect()
}
