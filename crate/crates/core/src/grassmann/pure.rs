//! The fermionic pure-state hierarchy propagated with exact Grassmann noise.
//!
//! Bath mode `l` (channel-major over the discrete bath) is one hierarchy
//! dimension. The states `psi^(k)` depend on the `zb_l` only, so they are
//! stored over a compressed algebra with bit `l` standing for `zb_l`; the
//! relative order of the `zb` generators is the same as in the paired
//! algebra, so embedding is sign-free.

use super::{product_sign, GrassmannAlgebra, GrassmannElement, Side};
use crate::error::{Error, Result};
use crate::indexset::{build_index_space, Direction, IndexSpace, Truncation};
use crate::integrate::{integrate_with, SolverOptions};
use crate::linalg::{gemv_acc, to_row_major, CMatrix};
use crate::oracle::DiscreteBathSpec;
use crate::series::DensitySeries;
use crate::system::{validate_system, Statistics, SystemSpec, TimeGrid};
use crate::C64;

const ZERO: C64 = C64::new(0.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// Processes of a discrete fermionic bath as Grassmann elements.
///
/// `Zb_c(t) = sum_{l in c} -i conj(g_l) e^{i w_l t} zb_l`,
/// `Z_c(t) = sum_{l in c} i g_l e^{-i w_l t} z_l`,
/// `D_l(t) = i g_l e^{-i w_l t} d/dzb_l` (left derivative).
#[derive(Debug, Clone)]
pub struct GrassmannNoise {
    /// `(channel, coupling, frequency)` per mode, channel-major.
    pub modes: Vec<(usize, C64, f64)>,
    pub algebra: GrassmannAlgebra,
}

impl GrassmannNoise {
    pub fn new(bath: &DiscreteBathSpec) -> Result<Self> {
        let modes: Vec<_> = bath
            .channels
            .iter()
            .enumerate()
            .flat_map(|(c, ch)| {
                ch.couplings
                    .iter()
                    .zip(&ch.frequencies)
                    .map(move |(&g, &w)| (c, g, w))
            })
            .collect();
        let algebra = GrassmannAlgebra::paired(modes.len())?;
        Ok(Self { modes, algebra })
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn zbar_coeff(&self, l: usize, t: f64) -> C64 {
        let (_, g, w) = self.modes[l];
        -I * g.conj() * C64::from_polar(1.0, w * t)
    }

    pub fn z_coeff(&self, l: usize, t: f64) -> C64 {
        let (_, g, w) = self.modes[l];
        I * g * C64::from_polar(1.0, -w * t)
    }

    pub fn zbar(&self, channel: usize, t: f64) -> GrassmannElement {
        let mut e = GrassmannElement::zero(self.algebra, 1, 1);
        for (l, m) in self.modes.iter().enumerate() {
            if m.0 == channel {
                e.raw_mut()[1 << GrassmannAlgebra::zbar(l)] += self.zbar_coeff(l, t);
            }
        }
        e
    }

    pub fn z(&self, channel: usize, t: f64) -> GrassmannElement {
        let mut e = GrassmannElement::zero(self.algebra, 1, 1);
        for (l, m) in self.modes.iter().enumerate() {
            if m.0 == channel {
                e.raw_mut()[1 << GrassmannAlgebra::z(l)] += self.z_coeff(l, t);
            }
        }
        e
    }

    /// `D_l(t) x`.
    pub fn derivative(&self, x: &GrassmannElement, l: usize, t: f64) -> GrassmannElement {
        let (_, g, w) = self.modes[l];
        x.g_deriv(GrassmannAlgebra::zbar(l), Side::Left)
            .scale(I * g * C64::from_polar(1.0, -w * t))
    }

    /// `D^k x = D_0^{k_0} D_1^{k_1} ... x` (the rightmost factor acts first).
    pub fn derivative_power(&self, x: &GrassmannElement, k: &[u16], t: f64) -> GrassmannElement {
        let mut y = x.clone();
        for l in (0..k.len()).rev() {
            for _ in 0..k[l] {
                y = self.derivative(&y, l, t);
            }
        }
        y
    }
}

/// A state depending on the `zb` generators only: `coeffs[mask * dim + a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    pub n_modes: usize,
    pub dim: usize,
    pub coeffs: Vec<C64>,
}

impl PureState {
    pub fn coeff(&self, mask: usize) -> &[C64] {
        &self.coeffs[mask * self.dim..(mask + 1) * self.dim]
    }

    /// Embeds into the paired algebra (`zb_l` is generator `2l + 1`).
    pub fn to_element(&self) -> Result<GrassmannElement> {
        let alg = GrassmannAlgebra::paired(self.n_modes)?;
        let mut e = GrassmannElement::zero(alg, self.dim, 1);
        for s in 0..1usize << self.n_modes {
            let mut full = 0usize;
            for l in 0..self.n_modes {
                if s >> l & 1 == 1 {
                    full |= 1 << GrassmannAlgebra::zbar(l);
                }
            }
            e.raw_mut()[full * self.dim..(full + 1) * self.dim].copy_from_slice(self.coeff(s));
        }
        Ok(e)
    }

    /// `psi(zb) -> psi(-zb)`.
    pub fn negate_zbar(&self) -> Self {
        let mut out = self.clone();
        for s in 0..1usize << self.n_modes {
            if s.count_ones() % 2 == 1 {
                for x in &mut out.coeffs[s * self.dim..(s + 1) * self.dim] {
                    *x = -*x;
                }
            }
        }
        out
    }

    /// Largest coefficient among monomials of the given degree parity.
    pub fn max_abs_with_parity(&self, odd: bool) -> f64 {
        (0..1usize << self.n_modes)
            .filter(|s| (s.count_ones() % 2 == 1) == odd)
            .flat_map(|s| self.coeff(s).iter())
            .map(|x| x.norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, o: &Self) -> f64 {
        self.coeffs
            .iter()
            .zip(&o.coeffs)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Result of a pure-hierarchy propagation.
#[derive(Debug, Clone)]
pub struct PureOutput {
    pub space: IndexSpace,
    pub times: Vec<f64>,
    /// `psi^(0)` at every grid point.
    pub psi0: Vec<PureState>,
    /// Every `psi^(k)` at the final time, in index-space order.
    pub final_states: Vec<PureState>,
    /// Largest coefficient ever seen in a state with some `k_l > 1`.
    pub max_forbidden: f64,
}

struct Link {
    src: usize,
    op: usize,
    coeff: C64,
}

/// Right-hand side of the pure hierarchy over an arbitrary index space.
pub struct PureHierarchy {
    noise: GrassmannNoise,
    space: IndexSpace,
    dim: usize,
    /// `-i H` row-major.
    gen: Vec<C64>,
    /// `L_c` then `L_c^dag`, row-major, per channel.
    ops: Vec<Vec<C64>>,
    kw: Vec<C64>,
    links: Vec<Vec<Link>>,
    total_sign: Vec<f64>,
    forbidden: Vec<bool>,
}

impl PureHierarchy {
    /// Full fermionic space (`k_l` in `{0, 1}`).
    pub fn new(spec: &SystemSpec, bath: &DiscreteBathSpec) -> Result<Self> {
        let m = bath.n_modes();
        GrassmannAlgebra::paired(m)?;
        let space = build_index_space(m, Statistics::Fermionic, &Truncation::Full)?;
        Self::with_space(spec, bath, space)
    }

    /// Any index space over the bath modes. Used with a bosonic space to
    /// check that states with `k_l > 1` are never populated: the lowering
    /// term carries `k_l mod 2` and the raising term of `k_l = 1` reads a
    /// state with `k_l = 2`.
    pub fn with_space(spec: &SystemSpec, bath: &DiscreteBathSpec, space: IndexSpace) -> Result<Self> {
        let spec = validate_system(spec.clone())?;
        if spec.statistics != Statistics::Fermionic || bath.statistics != Statistics::Fermionic {
            return Err(Error::StatisticsMismatch(
                "the Grassmann propagation needs a fermionic system and bath".into(),
            ));
        }
        if bath.channels.len() != spec.channels() {
            return Err(Error::ChannelMismatch {
                system: spec.channels(),
                modes: bath.channels.len(),
            });
        }
        let noise = GrassmannNoise::new(bath)?;
        let nm = noise.n_modes();
        if space.channels() != nm {
            return Err(Error::DimensionMismatch(format!(
                "index space has {} slots for {nm} modes",
                space.channels()
            )));
        }
        let d = spec.dim;
        let gen = to_row_major(&(spec.hamiltonian.clone() * (-I)));
        let mut ops = Vec::new();
        for l in &spec.couplings {
            ops.push(to_row_major(l));
            ops.push(to_row_major(&l.adjoint()));
        }
        let mut kw = Vec::new();
        let mut links = Vec::new();
        let mut total_sign = Vec::new();
        let mut forbidden = Vec::new();
        for p in 0..space.len() {
            let k = space.index(p).as_slice();
            kw.push(
                (0..nm)
                    .map(|l| I * noise.modes[l].2 * k[l] as f64)
                    .sum::<C64>(),
            );
            let mut row = Vec::new();
            for l in 0..nm {
                let (c, g, _) = noise.modes[l];
                let (s_total, s_after) = space.signs(p, l);
                if l == 0 {
                    total_sign.push(s_total as f64);
                }
                let s = s_after as f64;
                if let Some(q) = space.neighbor(p, l, Direction::Down) {
                    let parity = (k[l] % 2) as f64;
                    if parity != 0.0 {
                        row.push(Link {
                            src: q,
                            op: 2 * c,
                            coeff: C64::new(g.norm_sqr() * s * parity, 0.0),
                        });
                    }
                }
                if let Some(q) = space.neighbor(p, l, Direction::Up) {
                    row.push(Link {
                        src: q,
                        op: 2 * c + 1,
                        coeff: C64::new(-s, 0.0),
                    });
                }
            }
            links.push(row);
            forbidden.push(k.iter().any(|&x| x > 1));
        }
        Ok(Self {
            noise,
            space,
            dim: d,
            gen,
            ops,
            kw,
            links,
            total_sign,
            forbidden,
        })
    }

    pub fn space(&self) -> &IndexSpace {
        &self.space
    }

    fn block(&self) -> usize {
        (1usize << self.noise.n_modes()) * self.dim
    }

    pub fn state_len(&self) -> usize {
        self.space.len() * self.block()
    }

    /// `dy = f(t, y)`; `noise_sign = -1` propagates with `Zb -> -Zb`.
    pub fn rhs(&self, t: f64, y: &[C64], dy: &mut [C64], noise_sign: f64) {
        let d = self.dim;
        let blk = self.block();
        let nm = self.noise.n_modes();
        let masks = 1usize << nm;
        let nc = self.ops.len() / 2;
        let zc: Vec<C64> = (0..nm).map(|l| self.noise.zbar_coeff(l, t)).collect();
        let mut lpsi = vec![ZERO; nc * blk];
        dy.fill(ZERO);
        for p in 0..self.space.len() {
            let yp = &y[p * blk..(p + 1) * blk];
            let out = &mut dy[p * blk..(p + 1) * blk];
            if yp.iter().any(|x| *x != ZERO) {
                for s in 0..masks {
                    let o = &mut out[s * d..(s + 1) * d];
                    gemv_acc(o, &self.gen, &yp[s * d..(s + 1) * d], d, C64::new(1.0, 0.0));
                    for (oi, yi) in o.iter_mut().zip(&yp[s * d..(s + 1) * d]) {
                        *oi -= self.kw[p] * yi;
                    }
                }
                lpsi.fill(ZERO);
                for c in 0..nc {
                    for s in 0..masks {
                        gemv_acc(
                            &mut lpsi[c * blk + s * d..c * blk + (s + 1) * d],
                            &self.ops[2 * c],
                            &yp[s * d..(s + 1) * d],
                            d,
                            C64::new(1.0, 0.0),
                        );
                    }
                }
                let sgn = self.total_sign[p] * noise_sign;
                for (l, &(c, _, _)) in self.noise.modes.iter().enumerate() {
                    let bit = 1usize << l;
                    for s in 0..masks {
                        if s & bit != 0 {
                            continue;
                        }
                        let crossing = product_sign(bit as u32, s as u32);
                        let f = zc[l] * sgn * crossing;
                        let to = s | bit;
                        for a in 0..d {
                            out[to * d + a] += f * lpsi[c * blk + s * d + a];
                        }
                    }
                }
            }
            for link in &self.links[p] {
                let src = &y[link.src * blk..(link.src + 1) * blk];
                for s in 0..masks {
                    gemv_acc(
                        &mut out[s * d..(s + 1) * d],
                        &self.ops[link.op],
                        &src[s * d..(s + 1) * d],
                        d,
                        link.coeff,
                    );
                }
            }
        }
    }

    pub fn initial_state(&self, psi0: &[C64]) -> Result<Vec<C64>> {
        if psi0.len() != self.dim {
            return Err(Error::LengthMismatch(psi0.len(), self.dim));
        }
        let mut y = vec![ZERO; self.state_len()];
        let p0 = self.space.position(&crate::MultiIndex::zero(self.noise.n_modes()));
        let p0 = p0.ok_or_else(|| Error::InvalidTruncation("space lacks k = 0".into()))?;
        y[p0 * self.block()..p0 * self.block() + self.dim].copy_from_slice(psi0);
        Ok(y)
    }

    fn unpack(&self, y: &[C64], p: usize) -> PureState {
        let blk = self.block();
        PureState {
            n_modes: self.noise.n_modes(),
            dim: self.dim,
            coeffs: y[p * blk..(p + 1) * blk].to_vec(),
        }
    }

    pub fn propagate(
        &self,
        psi0: &[C64],
        grid: &TimeGrid,
        opts: &SolverOptions,
        negate_noise: bool,
    ) -> Result<PureOutput> {
        grid.check()?;
        let y0 = self.initial_state(psi0)?;
        let sign = if negate_noise { -1.0 } else { 1.0 };
        let p0 = self
            .space
            .position(&crate::MultiIndex::zero(self.noise.n_modes()))
            .unwrap_or(0);
        let blk = self.block();
        let mut psi = Vec::with_capacity(grid.len());
        let mut max_forbidden: f64 = 0.0;
        let last = integrate_with(
            |t, y, dy| self.rhs(t, y, dy, sign),
            &y0,
            grid,
            opts,
            |_, _, y| {
                psi.push(self.unpack(y, p0));
                for (p, &bad) in self.forbidden.iter().enumerate() {
                    if bad {
                        let m = y[p * blk..(p + 1) * blk]
                            .iter()
                            .map(|x| x.norm())
                            .fold(0.0, f64::max);
                        max_forbidden = max_forbidden.max(m);
                    }
                }
            },
        )?;
        Ok(PureOutput {
            space: self.space.clone(),
            times: grid.times(),
            psi0: psi,
            final_states: (0..self.space.len()).map(|p| self.unpack(&last, p)).collect(),
            max_forbidden,
        })
    }
}

/// Propagates every `psi^(k)` of the full fermionic space.
pub fn propagate_pure_fermionic(
    spec: &SystemSpec,
    bath: &DiscreteBathSpec,
    psi0: &[C64],
    grid: &TimeGrid,
    opts: &SolverOptions,
) -> Result<PureOutput> {
    PureHierarchy::new(spec, bath)?.propagate(psi0, grid, opts, false)
}

/// `E[|psi_m><psi~_n|]` for states over the compressed algebra.
///
/// With `psi = sum_S a_S zb_S` and `psi~ = sum_S b_S zb_S` only equal masks
/// survive the Gaussian average, and the ordering signs of
/// `zb_S conj(zb_S)` cancel to `(-1)^|S|`.
pub fn aux_density(psi: &PureState, tilde: &PureState) -> CMatrix {
    let d = psi.dim;
    let mut rho = CMatrix::zeros(d, d);
    for s in 0..1usize << psi.n_modes {
        let sg = if s.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
        let (a, b) = (psi.coeff(s), tilde.coeff(s));
        for i in 0..d {
            for j in 0..d {
                rho[(i, j)] += a[i] * b[j].conj() * sg;
            }
        }
    }
    rho
}

/// The same average through the general algebra (embedding, conjugation,
/// product and Berezin expectation).
pub fn aux_density_general(psi: &PureState, tilde: &PureState) -> Result<CMatrix> {
    let a = psi.to_element()?;
    let b = tilde.to_element()?.conjugate()?;
    a.g_mul(&b)?.gaussian_expect()
}

/// `rho(t) = E[|psi_t(Zb)><psi_t(-Zb)|]` from a plain and a noise-negated run.
pub fn reduced_density_grassmann(psi: &PureOutput, tilde: &PureOutput) -> Result<DensitySeries> {
    if psi.psi0.len() != tilde.psi0.len() {
        return Err(Error::GridMismatch);
    }
    let rho = psi
        .psi0
        .iter()
        .zip(&tilde.psi0)
        .map(|(a, b)| aux_density(a, b))
        .collect();
    Ok(DensitySeries::new(psi.times.clone(), rho))
}

/// Reduced density by two Grassmann propagations.
pub fn grassmann_density(
    spec: &SystemSpec,
    bath: &DiscreteBathSpec,
    psi0: &[C64],
    grid: &TimeGrid,
    opts: &SolverOptions,
) -> Result<DensitySeries> {
    let h = PureHierarchy::new(spec, bath)?;
    let plain = h.propagate(psi0, grid, opts, false)?;
    let tilde = h.propagate(psi0, grid, opts, true)?;
    reduced_density_grassmann(&plain, &tilde)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::indexset::Truncation;
    use crate::linalg::{from_rows, max_abs_diff, unitary_propagator};
    use crate::oracle::{exact_propagate, DiscreteChannel, OracleMethod};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn tls(eps: f64) -> SystemSpec {
        let h = from_rows(2, &[c(eps / 2.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-eps / 2.0, 0.0)]);
        let sm = from_rows(2, &[c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
        SystemSpec::new(h, vec![sm], Statistics::Fermionic)
    }

    fn bath(g: &[C64], w: &[f64]) -> DiscreteBathSpec {
        DiscreteBathSpec {
            channels: vec![DiscreteChannel {
                couplings: g.to_vec(),
                frequencies: w.to_vec(),
            }],
            statistics: Statistics::Fermionic,
            n_max: 1,
        }
    }

    #[test]
    fn zero_coupling_is_free_evolution() {
        let spec = tls(1.3);
        let b = bath(&[c(0.0, 0.0), c(0.0, 0.0)], &[0.5, -0.7]);
        let psi0 = [c(0.6, 0.0), c(0.0, 0.8)];
        let grid = TimeGrid::new(0.0, 2.0, 400).unwrap();
        let out = propagate_pure_fermionic(&spec, &b, &psi0, &grid, &SolverOptions::rk4()).unwrap();
        let u = unitary_propagator(&spec.hamiltonian, 2.0);
        let expect = u * nalgebra::DVector::from_column_slice(&psi0);
        let last = out.psi0.last().unwrap();
        for a in 0..2 {
            assert!((last.coeff(0)[a] - expect[a]).norm() < 1e-10);
        }
        assert!(last.coeffs[2..].iter().all(|x| x.norm() == 0.0));
        for st in &out.final_states[1..] {
            assert!(st.coeffs.iter().all(|x| x.norm() == 0.0));
        }
    }

    #[test]
    fn first_order_growth_of_aux_state() {
        // psi^(1) = D psi = |g|^2 t L psi_0 + O(t^2)
        let spec = tls(0.0);
        let g = c(0.3, 0.4);
        let b = bath(&[g], &[0.9]);
        let psi0 = [c(1.0, 0.0), c(0.0, 0.0)];
        for &t in &[1e-3, 2e-3] {
            let grid = TimeGrid::new(0.0, t, 20).unwrap();
            let out = propagate_pure_fermionic(&spec, &b, &psi0, &grid, &SolverOptions::rk4()).unwrap();
            let p1 = out.final_states[out.space.position(&vec![1u16].into()).unwrap()].clone();
            let lead = p1.coeff(0)[1];
            let expect = g.norm_sqr() * t;
            assert!((lead - expect).norm() < 2.0 * t * t, "{lead} vs {expect}");
        }
    }

    #[test]
    fn parity_bookkeeping() {
        // every zb comes with one system lowering, so the degree of a monomial
        // plus the system excitation plus |k| keeps the parity of psi_0
        let spec = tls(0.7);
        let b = bath(&[c(0.5, 0.1), c(0.2, -0.3), c(0.4, 0.0)], &[0.3, -0.5, 1.1]);
        let psi0 = [c(1.0, 0.0), c(0.0, 0.0)];
        let grid = TimeGrid::new(0.0, 1.5, 300).unwrap();
        let out = propagate_pure_fermionic(&spec, &b, &psi0, &grid, &SolverOptions::rk4()).unwrap();
        for (p, st) in out.final_states.iter().enumerate() {
            let k = out.space.index(p).order();
            let (mut allowed, mut forbidden) = (0.0f64, 0.0f64);
            for s in 0..1usize << st.n_modes {
                for a in 0..2 {
                    let excited = usize::from(a == 0);
                    let v = st.coeff(s)[a].norm();
                    if (s.count_ones() as usize + excited + k) % 2 == 1 {
                        allowed = allowed.max(v);
                    } else {
                        forbidden = forbidden.max(v);
                    }
                }
            }
            // one excitation can feed at most one derivative
            if k <= 1 {
                assert!(allowed > 1e-6);
            }
            assert_eq!(forbidden, 0.0);
        }
    }

    #[test]
    fn doubly_occupied_states_stay_empty() {
        let spec = tls(0.4);
        let b = bath(&[c(0.5, 0.1), c(0.2, -0.3), c(0.4, 0.0)], &[0.3, -0.5, 1.1]);
        let space = build_index_space(3, Statistics::Bosonic, &Truncation::Depth(4)).unwrap();
        assert!(space.indices().iter().any(|k| k.as_slice().iter().any(|&x| x > 1)));
        let ext = PureHierarchy::with_space(&spec, &b, space).unwrap();
        let psi0 = [c(0.6, 0.0), c(0.0, 0.8)];
        let grid = TimeGrid::new(0.0, 2.0, 400).unwrap();
        let wide = ext.propagate(&psi0, &grid, &SolverOptions::rk4(), false).unwrap();
        assert_eq!(wide.max_forbidden, 0.0);
        // and the allowed states coincide with the binary-space run
        let narrow = propagate_pure_fermionic(&spec, &b, &psi0, &grid, &SolverOptions::rk4()).unwrap();
        for (p, k) in narrow.space.indices().iter().enumerate() {
            let q = wide.space.position(k).unwrap();
            assert!(narrow.final_states[p].max_abs_diff(&wide.final_states[q]) < 1e-14);
        }
    }

    #[test]
    fn negated_noise_equals_substitution() {
        let spec = tls(0.7);
        let b = bath(&[c(0.5, 0.1), c(0.2, -0.3)], &[0.3, -0.5]);
        let h = PureHierarchy::new(&spec, &b).unwrap();
        let psi0 = [c(0.6, 0.0), c(0.0, 0.8)];
        let grid = TimeGrid::new(0.0, 1.0, 200).unwrap();
        let plain = h.propagate(&psi0, &grid, &SolverOptions::rk4(), false).unwrap();
        let neg = h.propagate(&psi0, &grid, &SolverOptions::rk4(), true).unwrap();
        for (a, b) in plain.final_states.iter().zip(&neg.final_states) {
            assert!(a.negate_zbar().max_abs_diff(b) < 1e-13);
        }
    }

    #[test]
    fn density_formula_matches_general_algebra() {
        let spec = tls(0.7);
        let b = bath(&[c(0.5, 0.1), c(0.2, -0.3)], &[0.3, -0.5]);
        let psi0 = [c(0.6, 0.0), c(0.0, 0.8)];
        let grid = TimeGrid::new(0.0, 1.0, 100).unwrap();
        let h = PureHierarchy::new(&spec, &b).unwrap();
        let plain = h.propagate(&psi0, &grid, &SolverOptions::rk4(), false).unwrap();
        let neg = h.propagate(&psi0, &grid, &SolverOptions::rk4(), true).unwrap();
        for a in &plain.final_states {
            for bb in &neg.final_states {
                let fast = aux_density(a, bb);
                let slow = aux_density_general(a, bb).unwrap();
                assert!(max_abs_diff(&fast, &slow) < 1e-14);
            }
        }
    }

    #[test]
    fn initial_density_and_free_evolution() {
        let spec = tls(1.1);
        let b = bath(&[c(0.0, 0.0)], &[0.0]);
        let psi0 = [c(0.6, 0.0), c(0.0, 0.8)];
        let grid = TimeGrid::new(0.0, 3.0, 600).unwrap();
        let rho = grassmann_density(&spec, &b, &psi0, &grid, &SolverOptions::rk4()).unwrap();
        let v = nalgebra::DVector::from_column_slice(&psi0);
        let r0 = &v * v.adjoint();
        assert!(max_abs_diff(&rho.rho[0], &r0) < 1e-15);
        let u = unitary_propagator(&spec.hamiltonian, 3.0);
        let r1 = &u * r0 * u.adjoint();
        assert!(max_abs_diff(rho.rho.last().unwrap(), &r1) < 1e-10);
    }

    #[test]
    fn resonant_single_mode_population() {
        // H = w sigma_+ sigma_- with the mode at w: the excitation hops back
        // and forth, rho_ee = cos^2(|g| t)
        let w = 0.8;
        let h = from_rows(2, &[c(w, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let sm = from_rows(2, &[c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
        let spec = SystemSpec::new(h, vec![sm], Statistics::Fermionic);
        let g = c(0.3, 0.4);
        let b = bath(&[g], &[w]);
        let grid = TimeGrid::new(0.0, 6.0, 3000).unwrap();
        let rho = grassmann_density(&spec, &b, &[c(1.0, 0.0), c(0.0, 0.0)], &grid, &SolverOptions::rk4())
            .unwrap();
        for (t, r) in rho.times.iter().zip(&rho.rho) {
            let expect = (g.norm() * t).cos().powi(2);
            assert!((r[(0, 0)].re - expect).abs() < 1e-10, "t={t}");
        }
    }

    #[test]
    fn agrees_with_exact_dynamics() {
        let spec = tls(0.9);
        let b = bath(&[c(0.5, 0.1), c(0.2, -0.3)], &[0.3, -0.5]);
        let psi0 = [c(0.6, 0.0), c(0.0, 0.8)];
        let grid = TimeGrid::new(0.0, 4.0, 2000).unwrap();
        let rho = grassmann_density(&spec, &b, &psi0, &grid, &SolverOptions::rk4()).unwrap();
        let exact = exact_propagate(&spec, &b, &psi0, &grid, OracleMethod::Eigen).unwrap();
        assert!(rho.max_deviation(&exact.series) < 1e-10);
    }

    #[test]
    fn generator_guard() {
        let spec = tls(0.0);
        let b = bath(&vec![c(0.1, 0.0); 13], &[0.0; 13]);
        assert!(matches!(
            PureHierarchy::new(&spec, &b),
            Err(Error::TooManyGenerators(26))
        ));
    }
}
