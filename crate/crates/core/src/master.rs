//! Deterministic hierarchies of auxiliary density operators `rho^(m,n)`.
//!
//! Pair indices are stored as one multi-index of length `2J` (see
//! [`IndexSpace::paired`]), where `J` counts hierarchy dimensions, i.e. modes.
//! Both hierarchies share
//!
//! ```text
//! d/dt rho^(m,n) = -i[H, rho^(m,n)] - (m.w + n.conj(w)) rho^(m,n) + couplings
//! ```
//!
//! and differ in the neighbor couplings. Bosonic:
//!
//! ```text
//!   + m_j g_j L rho^(m-e_j,n) + n_j conj(g_j) rho^(m,n-e_j) L^dag
//!   - [L^dag, rho^(m+e_j,n)] + [L, rho^(m,n+e_j)]
//! ```
//!
//! Fermionic, with `s(k,j) = (-1)^(k_{j+1}+...)`, `b(k,j) = (-1)^(k_1+...+k_{j-1})`:
//!
//! ```text
//!   + s(m,j) g_j L rho^(m-e_j,n) + s(n,j) conj(g_j) rho^(m,n-e_j) L^dag
//!   - s(m,j) L^dag rho^(m+e_j,n) + (-1)^|n| b(m,j) rho^(m+e_j,n) L^dag
//!   + (-1)^|m| b(n,j) L rho^(m,n+e_j) - s(n,j) rho^(m,n+e_j) L
//! ```
//!
//! The factors `b(m,j)`, `b(n,j)` come from moving the noise past the
//! auxiliary states of the other index when the Gaussian average is closed.
//! Dropping them ([`FermionSigns::Printed`]) reproduces the single-mode
//! hierarchy but not the multi-mode one; the exact-propagation comparison in
//! the test-suite separates the two.

use rayon::prelude::*;

use crate::bcf::ModeSet;
use crate::error::{Error, Result};
use crate::indexset::{parity_before, sign_factors, Direction, IndexSpace, MultiIndex, Truncation};
use crate::integrate::{integrate_with, SolverOptions};
use crate::linalg::{dagger, gemm_acc, to_row_major, trace, CMatrix};
use crate::series::DensitySeries;
use crate::system::{Statistics, SystemSpec, TimeGrid};
use crate::C64;

/// Sign convention for the fermionic up-couplings that mix the two indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FermionSigns {
    /// `(-1)^|n| b(m,j)` and `(-1)^|m| b(n,j)`; agrees with exact propagation.
    #[default]
    Derived,
    /// `(-1)^|n|` and `(-1)^|m|` alone; exact only for a single mode.
    Printed,
}

#[derive(Debug, Clone)]
pub struct MasterRun {
    pub spec: SystemSpec,
    pub modes: ModeSet,
    pub grid: TimeGrid,
    /// Applied to the pair index; fermionic runs normally use `Full`. Energy
    /// rates are taken from the modes (`w` for `m`, `conj(w)` for `n`).
    pub truncation: Truncation,
    pub options: SolverOptions,
    pub initial: Vec<C64>,
    pub signs: FermionSigns,
    /// Propagate only `(m,n)` with `pos(m,n) <= pos(n,m)` and rebuild the
    /// partners by adjoint. Off by default.
    pub hermitian_reduction: bool,
}

impl MasterRun {
    pub fn new(spec: SystemSpec, modes: ModeSet, grid: TimeGrid, initial: Vec<C64>) -> Self {
        let truncation = match spec.statistics {
            Statistics::Fermionic => Truncation::Full,
            Statistics::Bosonic => Truncation::Depth(4),
        };
        Self {
            spec,
            modes,
            grid,
            truncation,
            options: SolverOptions::default(),
            initial,
            signs: FermionSigns::Derived,
            hermitian_reduction: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy)]
struct Term {
    src: usize,
    op: usize,
    side: Side,
    coeff: C64,
}

/// Precomputed term table of one hierarchy.
#[derive(Debug, Clone)]
pub struct MasterHierarchy {
    pub space: IndexSpace,
    dim: usize,
    h: Vec<C64>,
    /// `L_0, L_0^dag, L_1, L_1^dag, ...` row-major
    ops: Vec<Vec<C64>>,
    rate: Vec<C64>,
    terms: Vec<Vec<Term>>,
    partner: Vec<usize>,
}

impl MasterHierarchy {
    pub fn new(run: &MasterRun) -> Result<Self> {
        let spec = &run.spec;
        if run.modes.n_channels() != spec.channels() {
            return Err(Error::ChannelMismatch {
                system: spec.channels(),
                modes: run.modes.n_channels(),
            });
        }
        if run.initial.len() != spec.dim {
            return Err(Error::LengthMismatch(run.initial.len(), spec.dim));
        }
        let flat = run.modes.flatten();
        let nd = flat.len();
        let mut rates: Vec<C64> = flat.iter().map(|(_, m)| m.w).collect();
        rates.extend(flat.iter().map(|(_, m)| m.w.conj()));
        let truncation = match &run.truncation {
            Truncation::Energy { max, .. } => Truncation::Energy { max: *max, w: rates.clone() },
            Truncation::Combined { depth, max, .. } => Truncation::Combined {
                depth: *depth,
                max: *max,
                w: rates.clone(),
            },
            t => t.clone(),
        };
        let stat = spec.statistics;
        let space = IndexSpace::paired(nd, stat, &truncation)?;

        let mut ops = vec![];
        for l in &spec.couplings {
            ops.push(to_row_major(l));
            ops.push(to_row_major(&dagger(l)));
        }
        let (lop, ldag) = (|c: usize| 2 * c, |c: usize| 2 * c + 1);
        let one = |s: i8| s as f64;

        let mut rate = Vec::with_capacity(space.len());
        let mut terms = Vec::with_capacity(space.len());
        let mut partner = Vec::with_capacity(space.len());
        for p in 0..space.len() {
            let k = space.index(p).as_slice();
            let (m, n) = k.split_at(nd);
            rate.push(MultiIndex(k.to_vec()).dot(&rates));
            let mut swapped = n.to_vec();
            swapped.extend_from_slice(m);
            partner.push(space.position(&MultiIndex(swapped)).unwrap_or(usize::MAX));

            let mut t = vec![];
            for (j, &(c, mode)) in flat.iter().enumerate() {
                let (g, gc) = (mode.g, mode.g.conj());
                let jm = j;
                let jn = nd + j;
                let (fm, fn_) = match stat {
                    Statistics::Bosonic => ((1.0, 1.0), (1.0, 1.0)),
                    Statistics::Fermionic => {
                        let (tm, sm) = sign_factors(m, j);
                        let (tn, sn) = sign_factors(n, j);
                        let (bm, bn) = match run.signs {
                            FermionSigns::Derived => (parity_before(m, j), parity_before(n, j)),
                            FermionSigns::Printed => (1, 1),
                        };
                        // (s(m), (-1)^|n| b(m)), (s(n), (-1)^|m| b(n))
                        ((one(sm), one(tn * bm)), (one(sn), one(tm * bn)))
                    }
                };
                if let Some(q) = space.neighbor(p, jm, Direction::Down) {
                    let occ = if stat == Statistics::Bosonic { m[j] as f64 } else { 1.0 };
                    t.push(Term { src: q, op: lop(c), side: Side::Left, coeff: g * occ * fm.0 });
                }
                if let Some(q) = space.neighbor(p, jn, Direction::Down) {
                    let occ = if stat == Statistics::Bosonic { n[j] as f64 } else { 1.0 };
                    t.push(Term { src: q, op: ldag(c), side: Side::Right, coeff: gc * occ * fn_.0 });
                }
                if let Some(q) = space.neighbor(p, jm, Direction::Up) {
                    t.push(Term { src: q, op: ldag(c), side: Side::Left, coeff: C64::new(-fm.0, 0.0) });
                    t.push(Term { src: q, op: ldag(c), side: Side::Right, coeff: C64::new(fm.1, 0.0) });
                }
                if let Some(q) = space.neighbor(p, jn, Direction::Up) {
                    t.push(Term { src: q, op: lop(c), side: Side::Left, coeff: C64::new(fn_.1, 0.0) });
                    t.push(Term { src: q, op: lop(c), side: Side::Right, coeff: C64::new(-fn_.0, 0.0) });
                }
            }
            terms.push(t);
        }
        if run.hermitian_reduction && partner.contains(&usize::MAX) {
            return Err(Error::InvalidTruncation(
                "hermitian reduction needs a truncation symmetric under (m,n) -> (n,m)".into(),
            ));
        }
        Ok(Self {
            space,
            dim: spec.dim,
            h: to_row_major(&spec.hamiltonian),
            ops,
            rate,
            terms,
            partner,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.space.len()
    }

    pub fn is_empty(&self) -> bool {
        self.space.is_empty()
    }

    /// Position of `(n,m)` for `(m,n)` at `p`, if present.
    pub fn partner(&self, p: usize) -> Option<usize> {
        Some(self.partner[p]).filter(|&q| q != usize::MAX)
    }

    fn rhs_one(&self, p: usize, y: &[C64], out: &mut [C64]) {
        let dd = self.dim * self.dim;
        let d = self.dim;
        let rho = &y[p * dd..(p + 1) * dd];
        out.fill(C64::new(0.0, 0.0));
        gemm_acc(out, &self.h, rho, d, C64::new(0.0, -1.0));
        gemm_acc(out, rho, &self.h, d, C64::new(0.0, 1.0));
        let r = self.rate[p];
        for (o, &v) in out.iter_mut().zip(rho) {
            *o -= r * v;
        }
        for t in &self.terms[p] {
            let src = &y[t.src * dd..(t.src + 1) * dd];
            match t.side {
                Side::Left => gemm_acc(out, &self.ops[t.op], src, d, t.coeff),
                Side::Right => gemm_acc(out, src, &self.ops[t.op], d, t.coeff),
            }
        }
    }

    /// Right-hand side on the full state (all aux operators, row-major,
    /// enumeration order).
    pub fn rhs(&self, y: &[C64], dy: &mut [C64]) {
        let dd = self.dim * self.dim;
        if self.len() * dd >= 1 << 14 {
            dy.par_chunks_mut(dd)
                .enumerate()
                .for_each(|(p, out)| self.rhs_one(p, y, out));
        } else {
            for (p, out) in dy.chunks_mut(dd).enumerate() {
                self.rhs_one(p, y, out);
            }
        }
    }

    pub fn initial_state(&self, psi0: &[C64]) -> Vec<C64> {
        let d = self.dim;
        let mut y = vec![C64::new(0.0, 0.0); self.len() * d * d];
        for a in 0..d {
            for b in 0..d {
                y[a * d + b] = psi0[a] * psi0[b].conj();
            }
        }
        y
    }

    /// `max |rho^(m,n)^dag - rho^(n,m)|` over present pairs.
    pub fn pairing_residual(&self, y: &[C64]) -> f64 {
        let d = self.dim;
        let dd = d * d;
        let mut r: f64 = 0.0;
        for p in 0..self.len() {
            if let Some(q) = self.partner(p) {
                for a in 0..d {
                    for b in 0..d {
                        let x = y[p * dd + a * d + b].conj() - y[q * dd + b * d + a];
                        r = r.max(x.norm());
                    }
                }
            }
        }
        r
    }

    fn canonical(&self) -> Vec<usize> {
        (0..self.len()).filter(|&p| p <= self.partner[p]).collect()
    }
}

/// Result of [`propagate_master`].
#[derive(Debug, Clone)]
pub struct MasterOutput {
    /// `rho^(0,0)(t)`.
    pub series: DensitySeries,
    /// `max_t |Tr rho^(0,0)(t) - 1|`
    pub trace_drift: f64,
    /// `max_t max_(m,n) |rho^(m,n)^dag - rho^(n,m)|`; zero by construction
    /// under hermitian reduction.
    pub pairing_residual: f64,
    pub space_size: usize,
    /// Full hierarchy state at the last grid point.
    pub final_state: Vec<C64>,
}

pub fn propagate_master(run: &MasterRun) -> Result<MasterOutput> {
    let hier = MasterHierarchy::new(run)?;
    let d = hier.dim();
    let dd = d * d;
    let mut rho = Vec::with_capacity(run.grid.len());
    let mut drift: f64 = 0.0;
    let mut pairing: f64 = 0.0;
    let y0 = hier.initial_state(&run.initial);
    let mut record = |y: &[C64], pairing_check: bool| {
        let m = CMatrix::from_fn(d, d, |a, b| y[a * d + b]);
        drift = drift.max((trace(&m) - 1.0).norm());
        if pairing_check {
            pairing = pairing.max(hier.pairing_residual(y));
        }
        rho.push(m);
    };

    let final_state = if run.hermitian_reduction {
        let canon = hier.canonical();
        let expand = |z: &[C64], full: &mut [C64]| {
            for (i, &p) in canon.iter().enumerate() {
                let src = &z[i * dd..(i + 1) * dd];
                full[p * dd..(p + 1) * dd].copy_from_slice(src);
                let q = hier.partner[p];
                if q != p {
                    for a in 0..d {
                        for b in 0..d {
                            full[q * dd + b * d + a] = src[a * d + b].conj();
                        }
                    }
                }
            }
        };
        let z0: Vec<C64> = canon
            .iter()
            .flat_map(|&p| y0[p * dd..(p + 1) * dd].to_vec())
            .collect();
        let mut full = vec![C64::new(0.0, 0.0); y0.len()];
        let mut last = y0.clone();
        integrate_with(
            |_, z, dz| {
                expand(z, &mut full);
                for (i, &p) in canon.iter().enumerate() {
                    hier.rhs_one(p, &full, &mut dz[i * dd..(i + 1) * dd]);
                }
            },
            &z0,
            &run.grid,
            &run.options,
            |_, _, z| {
                expand(z, &mut last);
                record(&last, false);
            },
        )?;
        last
    } else {
        integrate_with(|_, y, dy| hier.rhs(y, dy), &y0, &run.grid, &run.options, |_, _, y| {
            record(y, true)
        })?
    };

    Ok(MasterOutput {
        series: DensitySeries::new(run.grid.times(), rho),
        trace_drift: drift,
        pairing_residual: pairing,
        space_size: hier.len(),
        final_state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bcf::Mode;
    use crate::linalg::{from_rows, max_abs_diff, unitary_propagator};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn tls(stat: Statistics, channels: usize) -> SystemSpec {
        let h = from_rows(2, &[c(0.5, 0.0), c(0.2, 0.0), c(0.2, 0.0), c(-0.5, 0.0)]);
        let sm = from_rows(2, &[c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
        let sz = from_rows(2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)]);
        let ls = [sm, sz];
        SystemSpec::new(h, (0..channels).map(|j| ls[j % 2].clone()).collect(), stat)
    }

    fn modes(n: usize) -> ModeSet {
        ModeSet::single(
            (0..n)
                .map(|i| Mode::new(c(0.3 + 0.1 * i as f64, 0.05), c(0.2 * i as f64, 0.7 - 0.4 * i as f64)).unwrap())
                .collect(),
        )
    }

    fn random_state(h: &MasterHierarchy, seed: u64) -> Vec<C64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..h.len() * h.dim() * h.dim())
            .map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect()
    }

    fn run(stat: Statistics, channels: usize) -> MasterRun {
        MasterRun::new(
            tls(stat, channels),
            modes(channels),
            TimeGrid::new(0.0, 1.0, 100).unwrap(),
            vec![c(0.0, 0.0), c(1.0, 0.0)],
        )
    }

    #[test]
    fn fermionic_single_mode_has_four_operators() {
        let h = MasterHierarchy::new(&run(Statistics::Fermionic, 1)).unwrap();
        assert_eq!(h.len(), 4);
    }

    #[test]
    fn trace_of_top_equation_vanishes() {
        for stat in [Statistics::Fermionic, Statistics::Bosonic] {
            let h = MasterHierarchy::new(&run(stat, 2)).unwrap();
            let y = random_state(&h, 1);
            let mut dy = vec![c(0.0, 0.0); y.len()];
            h.rhs(&y, &mut dy);
            assert!((dy[0] + dy[3]).norm() < 1e-14, "{stat:?}");
        }
    }

    #[test]
    fn pairing_is_preserved_algebraically() {
        for stat in [Statistics::Fermionic, Statistics::Bosonic] {
            for signs in [FermionSigns::Derived, FermionSigns::Printed] {
                let mut r = run(stat, 3);
                r.signs = signs;
                let h = MasterHierarchy::new(&r).unwrap();
                let mut y = random_state(&h, 2);
                // symmetrize: rho^(n,m) = rho^(m,n)^dag
                let dd = 4;
                for p in 0..h.len() {
                    let q = h.partner(p).unwrap();
                    if q > p {
                        for a in 0..2 {
                            for b in 0..2 {
                                y[q * dd + b * 2 + a] = y[p * dd + a * 2 + b].conj();
                            }
                        }
                    } else if q == p {
                        for a in 0..2 {
                            for b in 0..a {
                                y[p * dd + b * 2 + a] = y[p * dd + a * 2 + b].conj();
                            }
                            y[p * dd + a * 3].im = 0.0;
                        }
                    }
                }
                assert!(h.pairing_residual(&y) < 1e-15);
                let mut dy = vec![c(0.0, 0.0); y.len()];
                h.rhs(&y, &mut dy);
                assert!(h.pairing_residual(&dy) < 1e-14, "{stat:?} {signs:?}");
            }
        }
    }

    #[test]
    fn decoupled_evolves_unitarily() {
        for stat in [Statistics::Fermionic, Statistics::Bosonic] {
            let mut r = run(stat, 1);
            r.spec.couplings = vec![CMatrix::zeros(2, 2)];
            let out = propagate_master(&r).unwrap();
            let psi = nalgebra::DVector::from_vec(r.initial.clone());
            let rho0 = &psi * psi.adjoint();
            for (i, m) in out.series.rho.iter().enumerate() {
                let u = unitary_propagator(&r.spec.hamiltonian, r.grid.time(i));
                let exact = &u * &rho0 * u.adjoint();
                assert!(max_abs_diff(m, &exact) < 1e-10);
            }
            assert!(out.final_state[4..].iter().all(|x| x.norm() == 0.0));
        }
    }

    #[test]
    fn conservation_on_both_statistics() {
        for stat in [Statistics::Fermionic, Statistics::Bosonic] {
            let out = propagate_master(&run(stat, 2)).unwrap();
            assert!(out.trace_drift < 1e-12, "{}", out.trace_drift);
            assert!(out.pairing_residual < 1e-12, "{}", out.pairing_residual);
        }
    }

    #[test]
    fn pure_dephasing_keeps_populations() {
        let mut r = run(Statistics::Bosonic, 1);
        r.spec.hamiltonian = CMatrix::zeros(2, 2);
        r.spec.couplings = vec![from_rows(2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)])];
        let s = 0.5f64.sqrt();
        r.initial = vec![c(s, 0.0), c(s, 0.0)];
        r.truncation = Truncation::Depth(6);
        let out = propagate_master(&r).unwrap();
        for m in &out.series.rho {
            assert!((m[(0, 0)].re - 0.5).abs() < 1e-12);
            assert!((m[(1, 1)].re - 0.5).abs() < 1e-12);
        }
        // coherence decays as exp(-4 Re int_0^t int_0^s alpha) for L = sz
        let mode = r.modes.channels[0][0];
        let t = r.grid.t1;
        let (g, w) = (mode.g, mode.w);
        let phi = g * (t / w - (1.0 - (-w * t).exp()) / (w * w));
        let exact = 0.5 * (-4.0 * phi.re).exp();
        let got = out.series.rho.last().unwrap()[(0, 1)].norm();
        assert!((got - exact).abs() < 1e-5, "{got} vs {exact}");
    }

    #[test]
    fn single_mode_fermionic_equals_bosonic_at_top() {
        let fr = run(Statistics::Fermionic, 1);
        let mut br = run(Statistics::Bosonic, 1);
        br.truncation = Truncation::Depth(1);
        let fh = MasterHierarchy::new(&fr).unwrap();
        let bh = MasterHierarchy::new(&br).unwrap();
        // bosonic depth-1 space {(0,0),(1,0),(0,1)} is a prefix of the fermionic one
        let y = random_state(&fh, 5);
        let yb = y[..bh.len() * 4].to_vec();
        let mut df = vec![c(0.0, 0.0); y.len()];
        let mut db = vec![c(0.0, 0.0); yb.len()];
        fh.rhs(&y, &mut df);
        bh.rhs(&yb, &mut db);
        for i in 0..4 {
            assert!((df[i] - db[i]).norm() < 1e-15);
        }
    }

    #[test]
    fn sign_conventions_agree_for_one_mode_only() {
        let diff = |n: usize| {
            let mut a = run(Statistics::Fermionic, n);
            a.signs = FermionSigns::Derived;
            let mut b = a.clone();
            b.signs = FermionSigns::Printed;
            let oa = propagate_master(&a).unwrap();
            let ob = propagate_master(&b).unwrap();
            oa.series.max_deviation(&ob.series)
        };
        assert_eq!(diff(1), 0.0);
        assert!(diff(2) > 1e-6);
    }

    #[test]
    fn hermitian_reduction_matches_full() {
        for stat in [Statistics::Fermionic, Statistics::Bosonic] {
            let full = run(stat, 2);
            let mut red = full.clone();
            red.hermitian_reduction = true;
            let a = propagate_master(&full).unwrap();
            let b = propagate_master(&red).unwrap();
            assert!(a.series.max_deviation(&b.series) < 1e-13);
            let d: f64 = a
                .final_state
                .iter()
                .zip(&b.final_state)
                .map(|(x, y)| (x - y).norm())
                .fold(0.0, f64::max);
            assert!(d < 1e-13);
        }
    }

    #[test]
    fn channel_mismatch() {
        let mut r = run(Statistics::Fermionic, 2);
        r.modes = modes(1);
        assert!(matches!(MasterHierarchy::new(&r), Err(Error::ChannelMismatch { .. })));
    }
}
