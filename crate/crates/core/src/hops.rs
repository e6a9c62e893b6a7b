//! Linear bosonic hierarchy of pure states driven by one noise realization,
//! and ensemble averaging into the reduced density operator.
//!
//! For every index `k`:
//!
//! ```text
//! d/dt psi^(k) = (-iH - k.w + sum_j conj(Z_j(t)) L_j) psi^(k)
//!              + sum_d k_d g_d L_{c(d)} psi^(k - e_d)
//!              - sum_d L_{c(d)}^dag psi^(k + e_d)
//! ```
//!
//! where `d` runs over hierarchy dimensions (one per mode) and `c(d)` is the
//! channel the mode belongs to.

use rayon::prelude::*;

use crate::bcf::ModeSet;
use crate::error::{Error, Result};
use crate::indexset::{build_index_space, Direction, IndexSpace, Truncation};
use crate::integrate::{integrate_with, SolverOptions};
use crate::linalg::{gemv_acc, to_row_major, CMatrix};
use crate::noise::{NoiseGenerator, NoisePath};
use crate::series::DensitySeries;
use crate::system::{Statistics, SystemSpec, TimeGrid};
use crate::C64;

/// Everything that defines a trajectory except the seed.
#[derive(Debug, Clone)]
pub struct HopsRun {
    pub spec: SystemSpec,
    pub modes: ModeSet,
    pub grid: TimeGrid,
    /// Energy rates are taken from the modes.
    pub truncation: Truncation,
    /// Static closure for states just outside the truncated space. Off by default.
    pub terminator: bool,
    pub options: SolverOptions,
    pub initial: Vec<C64>,
}

/// Precomputed coupling tables for one run.
#[derive(Debug, Clone)]
pub struct HopsHierarchy {
    pub space: IndexSpace,
    dim: usize,
    h: Vec<C64>,
    l: Vec<Vec<C64>>,
    kw: Vec<C64>,
    /// per index: (source position, channel, coefficient k_d g_d)
    down: Vec<Vec<(usize, usize, C64)>>,
    /// per index: (source position, channel)
    up: Vec<Vec<(usize, usize)>>,
    /// per index: (source position, row-major D x D operator)
    closure: Vec<Vec<(usize, Vec<C64>)>>,
}

impl HopsHierarchy {
    pub fn new(run: &HopsRun) -> Result<Self> {
        let spec = &run.spec;
        if spec.statistics != Statistics::Bosonic {
            return Err(Error::StatisticsMismatch(
                "the pure-state hierarchy with sampled noise is bosonic only".into(),
            ));
        }
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
        let ws: Vec<C64> = flat.iter().map(|(_, m)| m.w).collect();
        // energy bounds always use the rates of the modes
        let truncation = match &run.truncation {
            Truncation::Energy { max, .. } => Truncation::Energy { max: *max, w: ws.clone() },
            Truncation::Combined { depth, max, .. } => Truncation::Combined {
                depth: *depth,
                max: *max,
                w: ws.clone(),
            },
            t => t.clone(),
        };
        let space = build_index_space(nd, Statistics::Bosonic, &truncation)?;
        let d = spec.dim;

        let mut kw = Vec::with_capacity(space.len());
        let mut down = Vec::with_capacity(space.len());
        let mut up = Vec::with_capacity(space.len());
        let mut closure = Vec::with_capacity(space.len());
        for p in 0..space.len() {
            let k = space.index(p);
            kw.push(k.dot(&ws));
            let mut dn = vec![];
            let mut u = vec![];
            let mut cl = vec![];
            for (dd, &(c, m)) in flat.iter().enumerate() {
                if let Some(q) = space.neighbor(p, dd, Direction::Down) {
                    dn.push((q, c, m.g * k.get(dd) as f64));
                }
                match space.neighbor(p, dd, Direction::Up) {
                    Some(q) => u.push((q, c)),
                    None if run.terminator => {
                        let mut kq = k.clone();
                        kq.0[dd] += 1;
                        cl.extend(closure_terms(spec, &space, &flat, &kq, c)?);
                    }
                    None => {}
                }
            }
            down.push(dn);
            up.push(u);
            closure.push(cl);
        }
        Ok(Self {
            space,
            dim: d,
            h: to_row_major(&spec.hamiltonian),
            l: spec.couplings.iter().map(to_row_major).collect(),
            kw,
            down,
            up,
            closure,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn state_len(&self) -> usize {
        self.dim * self.space.len()
    }

    /// Right-hand side with `zbar[j] = conj(Z_j(t))`.
    pub fn rhs(&self, zbar: &[C64], y: &[C64], dy: &mut [C64]) {
        let d = self.dim;
        let mut heff: Vec<C64> = self.h.iter().map(|&x| C64::new(x.im, -x.re)).collect();
        for (l, &z) in self.l.iter().zip(zbar) {
            for (e, &v) in heff.iter_mut().zip(l) {
                *e += z * v;
            }
        }
        dy.fill(C64::new(0.0, 0.0));
        for p in 0..self.space.len() {
            let (yp, out) = (&y[p * d..(p + 1) * d], &mut dy[p * d..(p + 1) * d]);
            gemv_acc(out, &heff, yp, d, C64::new(1.0, 0.0));
            for (o, &v) in out.iter_mut().zip(yp) {
                *o -= self.kw[p] * v;
            }
            for &(q, c, coef) in &self.down[p] {
                gemv_acc(out, &self.l[c], &y[q * d..(q + 1) * d], d, coef);
            }
            for &(q, c) in &self.up[p] {
                adjoint_gemv_acc(out, &self.l[c], &y[q * d..(q + 1) * d], d, C64::new(-1.0, 0.0));
            }
            for (q, m) in &self.closure[p] {
                gemv_acc(out, m, &y[q * d..(q + 1) * d], d, C64::new(1.0, 0.0));
            }
        }
    }

    pub fn initial_state(&self, psi0: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::new(0.0, 0.0); self.state_len()];
        y[..self.dim].copy_from_slice(psi0);
        y
    }
}

/// `out += alpha * a^dag x` for row-major `a`.
fn adjoint_gemv_acc(out: &mut [C64], a: &[C64], x: &[C64], d: usize, alpha: C64) {
    for (k, &xk) in x.iter().enumerate() {
        let s = alpha * xk;
        let row = &a[k * d..(k + 1) * d];
        for (o, &v) in out.iter_mut().zip(row) {
            *o += s * v.conj();
        }
    }
}

/// `-L_c^dag psi^(q)` with `psi^(q) ~ (iH + q.w)^-1 sum_i q_i g_i L_i psi^(q - e_i)`,
/// the stationary solution of the cut state's own equation without noise and
/// without its upward coupling.
fn closure_terms(
    spec: &SystemSpec,
    space: &IndexSpace,
    flat: &[(usize, crate::bcf::Mode)],
    q: &crate::indexset::MultiIndex,
    channel: usize,
) -> Result<Vec<(usize, Vec<C64>)>> {
    let d = spec.dim;
    let ws: Vec<C64> = flat.iter().map(|(_, m)| m.w).collect();
    let qw = q.dot(&ws);
    let a: CMatrix =
        spec.hamiltonian.map(|x| C64::new(0.0, 1.0) * x) + CMatrix::identity(d, d) * qw;
    let inv = a.try_inverse().ok_or_else(|| {
        Error::DimensionMismatch("terminator operator (iH + q.w) is singular".into())
    })?;
    let pre = -spec.couplings[channel].adjoint() * inv;
    let mut out = vec![];
    for (i, &(ci, m)) in flat.iter().enumerate() {
        if q.get(i) == 0 {
            continue;
        }
        let mut src = q.clone();
        src.0[i] -= 1;
        if let Some(pos) = space.position(&src) {
            let op = &pre * &spec.couplings[ci] * (m.g * q.get(i) as f64);
            out.push((pos, to_row_major(&op)));
        }
    }
    Ok(out)
}

/// One trajectory: `psi^(0)` at every grid point, and optionally the full
/// hierarchy state.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub seed: u64,
    pub psi: Vec<Vec<C64>>,
    pub aux: Option<Vec<Vec<C64>>>,
}

/// Noise generators, one per channel.
#[derive(Debug, Clone)]
pub struct NoiseBank {
    gens: Vec<NoiseGenerator>,
}

impl NoiseBank {
    pub fn new(modes: &ModeSet, grid: &TimeGrid) -> Result<Self> {
        Ok(Self {
            gens: modes
                .channels
                .iter()
                .map(|ms| NoiseGenerator::new(ms, grid))
                .collect::<Result<_>>()?,
        })
    }

    pub fn sample(&self, seed: u64) -> Vec<NoisePath> {
        self.gens
            .iter()
            .enumerate()
            .map(|(j, g)| g.sample(seed, j))
            .collect()
    }
}

/// Integrates the hierarchy against given noise paths, calling
/// `observer(i, state)` at every grid point.
pub fn propagate_with_noise(
    hier: &HopsHierarchy,
    run: &HopsRun,
    noise: &[NoisePath],
    mut observer: impl FnMut(usize, &[C64]),
) -> Result<()> {
    let mut zbar = vec![C64::new(0.0, 0.0); noise.len()];
    integrate_with(
        |t, y, dy| {
            for (z, path) in zbar.iter_mut().zip(noise) {
                *z = path.at(t).conj();
            }
            hier.rhs(&zbar, y, dy)
        },
        &hier.initial_state(&run.initial),
        &run.grid,
        &run.options,
        |i, _, y| observer(i, y),
    )?;
    Ok(())
}

pub fn propagate_trajectory(run: &HopsRun, seed: u64, keep_aux: bool) -> Result<Trajectory> {
    let hier = HopsHierarchy::new(run)?;
    let bank = NoiseBank::new(&run.modes, &run.grid)?;
    trajectory(&hier, &bank, run, seed, keep_aux)
}

fn trajectory(
    hier: &HopsHierarchy,
    bank: &NoiseBank,
    run: &HopsRun,
    seed: u64,
    keep_aux: bool,
) -> Result<Trajectory> {
    let noise = bank.sample(seed);
    let d = hier.dim();
    let mut psi = Vec::with_capacity(run.grid.len());
    let mut aux = keep_aux.then(Vec::new);
    propagate_with_noise(hier, run, &noise, |_, y| {
        psi.push(y[..d].to_vec());
        if let Some(a) = aux.as_mut() {
            a.push(y.to_vec());
        }
    })?;
    Ok(Trajectory { seed, psi, aux })
}

/// Running sums of `|psi><psi|` per grid point and element.
#[derive(Debug, Clone, PartialEq)]
pub struct DyadAccumulator {
    dim: usize,
    count: usize,
    sum: Vec<C64>,
    /// `(sum re^2, sum im^2)` packed as a complex number.
    sq: Vec<C64>,
}

impl DyadAccumulator {
    pub fn new(dim: usize, points: usize) -> Self {
        Self {
            dim,
            count: 0,
            sum: vec![C64::new(0.0, 0.0); points * dim * dim],
            sq: vec![C64::new(0.0, 0.0); points * dim * dim],
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn push(&mut self, psi: &[Vec<C64>]) {
        let d = self.dim;
        for (i, v) in psi.iter().enumerate() {
            for a in 0..d {
                for b in 0..d {
                    let x = v[a] * v[b].conj();
                    let idx = (i * d + a) * d + b;
                    self.sum[idx] += x;
                    self.sq[idx] += C64::new(x.re * x.re, x.im * x.im);
                }
            }
        }
        self.count += 1;
    }

    pub fn merge(&mut self, other: &Self) {
        for (s, o) in self.sum.iter_mut().zip(&other.sum) {
            *s += o;
        }
        for (s, o) in self.sq.iter_mut().zip(&other.sq) {
            *s += o;
        }
        self.count += other.count;
    }

    pub fn finish(&self, times: &[f64]) -> Result<DensitySeries> {
        if self.count < 2 {
            return Err(Error::InsufficientTrajectories { needed: 2, got: self.count });
        }
        let d = self.dim;
        let n = self.count as f64;
        let mut rho = vec![];
        let mut se = vec![];
        for i in 0..times.len() {
            let mut r = CMatrix::zeros(d, d);
            let mut e = CMatrix::zeros(d, d);
            for a in 0..d {
                for b in 0..d {
                    let idx = (i * d + a) * d + b;
                    let m = self.sum[idx] / n;
                    let var = |sq: f64, m: f64| ((sq - n * m * m) / (n - 1.0)).max(0.0);
                    r[(a, b)] = m;
                    e[(a, b)] = C64::new(
                        (var(self.sq[idx].re, m.re) / n).sqrt(),
                        (var(self.sq[idx].im, m.im) / n).sqrt(),
                    );
                }
            }
            rho.push(r);
            se.push(e);
        }
        Ok(DensitySeries {
            times: times.to_vec(),
            rho,
            se: Some(se),
        })
    }
}

/// Mean and standard error of the dyads of stored trajectories, summed in
/// the given order.
pub fn ensemble_density(trajectories: &[Trajectory], times: &[f64]) -> Result<DensitySeries> {
    let d = trajectories.first().map_or(0, |t| t.psi.first().map_or(0, Vec::len));
    let mut acc = DyadAccumulator::new(d, times.len());
    for t in trajectories {
        acc.push(&t.psi);
    }
    acc.finish(times)
}

/// Seeds per work item; fixed so the reduction tree does not depend on the
/// number of worker threads.
pub const CHUNK: usize = 32;

/// Propagates one trajectory per seed on the current rayon pool and averages.
///
/// Chunks of [`CHUNK`] seeds are summed sequentially and the chunk sums are
/// merged in seed order, so the result is bit-identical for any pool size.
pub fn run_ensemble(run: &HopsRun, seeds: &[u64]) -> Result<DensitySeries> {
    if seeds.len() < 2 {
        return Err(Error::InsufficientTrajectories { needed: 2, got: seeds.len() });
    }
    let hier = HopsHierarchy::new(run)?;
    let bank = NoiseBank::new(&run.modes, &run.grid)?;
    let points = run.grid.len();
    let parts: Vec<DyadAccumulator> = seeds
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = DyadAccumulator::new(hier.dim(), points);
            for &s in chunk {
                acc.push(&trajectory(&hier, &bank, run, s, false)?.psi);
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut total = DyadAccumulator::new(hier.dim(), points);
    for p in &parts {
        total.merge(p);
    }
    total.finish(&run.grid.times())
}
