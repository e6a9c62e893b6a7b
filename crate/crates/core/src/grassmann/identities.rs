//! Mechanical checks of the sign identities behind the fermionic hierarchies.
//!
//! Every trial draws a random three-mode bath (one mode per channel, so each
//! mode has its own process), random matrix-valued elements and a random
//! time, and evaluates both sides of each identity with independent code
//! paths of the algebra.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{GrassmannAlgebra, GrassmannElement, GrassmannNoise, Side};
use crate::bcf::discrete_bath_modes;
use crate::oracle::{DiscreteBathSpec, DiscreteChannel};
use crate::system::Statistics;
use crate::C64;

const MODES: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityRow {
    pub name: String,
    pub max_residual: f64,
    pub trials: usize,
    /// Reported for comparison only; not expected to vanish.
    pub informational: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IdentityReport {
    pub rows: Vec<IdentityRow>,
}

impl IdentityReport {
    /// Largest residual over the non-informational rows.
    pub fn max_residual(&self) -> f64 {
        self.rows
            .iter()
            .filter(|r| !r.informational)
            .map(|r| r.max_residual)
            .fold(0.0, f64::max)
    }

    pub fn passed(&self, tol: f64) -> bool {
        self.max_residual() <= tol
    }
}

impl fmt::Display for IdentityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<44} {:>12} {:>7}", "identity", "max residual", "trials")?;
        for r in &self.rows {
            let note = if r.informational { "  (informational)" } else { "" };
            writeln!(
                f,
                "{:<44} {:>12.3e} {:>7}{note}",
                r.name, r.max_residual, r.trials
            )?;
        }
        Ok(())
    }
}

struct Trial {
    rng: ChaCha8Rng,
    noise: GrassmannNoise,
    alg: GrassmannAlgebra,
    t: f64,
}

impl Trial {
    fn new(seed: u64, trial: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial);
        let channels = (0..MODES)
            .map(|_| DiscreteChannel {
                couplings: vec![C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)],
                frequencies: vec![2.0 * rng.random::<f64>() - 1.0],
            })
            .collect();
        let bath = DiscreteBathSpec {
            channels,
            statistics: Statistics::Fermionic,
            n_max: 1,
        };
        let noise = GrassmannNoise::new(&bath).expect("three modes fit the algebra");
        let alg = noise.algebra;
        let t = 3.0 * rng.random::<f64>();
        Self { rng, noise, alg, t }
    }

    fn element(&mut self, rows: usize, cols: usize) -> GrassmannElement {
        let rng = &mut self.rng;
        GrassmannElement::from_fn(self.alg, rows, cols, |_, _, _| {
            C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        })
    }

    /// Random state depending on the `zb` generators only.
    fn zbar_state(&mut self, rows: usize) -> GrassmannElement {
        let mut e = self.element(rows, 1);
        let rc = rows;
        for m in 0..self.alg.size() {
            let has_z = (0..MODES).any(|l| m >> GrassmannAlgebra::z(l) & 1 == 1);
            if has_z {
                for x in &mut e.raw_mut()[m * rc..(m + 1) * rc] {
                    *x = C64::new(0.0, 0.0);
                }
            }
        }
        e
    }

    fn weight(&self, l: usize) -> f64 {
        self.noise.modes[l].1.norm_sqr()
    }
}

fn all_indices() -> Vec<[u16; MODES]> {
    (0..1u16 << MODES)
        .map(|b| [b & 1, b >> 1 & 1, b >> 2 & 1])
        .collect()
}

fn parity_after(k: &[u16], j: usize) -> f64 {
    if k[j + 1..].iter().sum::<u16>() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn parity_before(k: &[u16], j: usize) -> f64 {
    if k[..j].iter().sum::<u16>() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn parity_total(k: &[u16]) -> f64 {
    if k.iter().sum::<u16>() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn diff(a: &GrassmannElement, b: &GrassmannElement) -> f64 {
    a.max_abs_diff(b)
}

fn mdiff(a: &crate::linalg::CMatrix, b: &crate::linalg::CMatrix) -> f64 {
    (a - b).iter().map(|x| x.norm()).fold(0.0, f64::max)
}

const NAMES: [&str; 12] = [
    "product associativity",
    "product distributivity",
    "derivative anticommutes with generators",
    "Berezin elimination equals mask rule",
    "odd moments vanish",
    "correlation E[Z(t) Zb(s)] = alpha(t-s)",
    "reordering D^k D_j",
    "noise commutation D^k Zb_j",
    "Novikov right (integration by parts)",
    "Novikov left (integration by parts)",
    "Novikov right on aux dyads",
    "Novikov left on aux dyads",
];
const PRINTED: [&str; 2] = [
    "Novikov right on aux dyads, no ordering sign",
    "Novikov left on aux dyads, no ordering sign",
];

fn run_trial(seed: u64, trial: u64) -> [f64; 14] {
    let mut tr = Trial::new(seed, trial);
    let mut r = [0.0f64; 14];
    let t = tr.t;
    let one = C64::new(1.0, 0.0);

    let (a, b, c) = (tr.element(2, 2), tr.element(2, 2), tr.element(2, 2));
    let ab = a.g_mul(&b).unwrap();
    r[0] = diff(&ab.g_mul(&c).unwrap(), &a.g_mul(&b.g_mul(&c).unwrap()).unwrap());
    r[1] = diff(
        &a.g_mul(&b.add(&c).unwrap()).unwrap(),
        &ab.add(&a.g_mul(&c).unwrap()).unwrap(),
    );

    for i in 0..tr.alg.n_gen {
        for j in 0..tr.alg.n_gen {
            let zj = GrassmannElement::generator(tr.alg, j, one);
            let lhs = zj
                .g_mul(&a)
                .unwrap()
                .g_deriv(i, Side::Left)
                .add(&zj.g_mul(&a.g_deriv(i, Side::Left)).unwrap())
                .unwrap();
            let rhs = if i == j { a.clone() } else { GrassmannElement::zero(tr.alg, 2, 2) };
            r[2] = r[2].max(diff(&lhs, &rhs));
        }
    }

    r[3] = mdiff(&a.gaussian_expect().unwrap(), &a.gaussian_expect_berezin().unwrap());

    let mut odd = a.clone();
    let mut even = b.clone();
    for m in 0..tr.alg.size() {
        let (kill_a, kill_b) = if m.count_ones() % 2 == 0 { (&mut odd, &mut even) } else { (&mut even, &mut odd) };
        let _ = kill_b;
        for x in &mut kill_a.raw_mut()[m * 4..(m + 1) * 4] {
            *x = C64::new(0.0, 0.0);
        }
    }
    r[4] = crate::linalg::max_abs(&odd.g_mul(&even).unwrap().gaussian_expect().unwrap());

    let s = 3.0 * tr.rng.random::<f64>();
    for l in 0..MODES {
        let zz = tr.noise.z(l, t).g_mul(&tr.noise.zbar(l, s)).unwrap();
        let e = zz.gaussian_expect().unwrap()[(0, 0)];
        let (_, g, w) = tr.noise.modes[l];
        let alpha = discrete_bath_modes(&[g], &[w]).unwrap()[0].eval(t - s);
        r[5] = r[5].max((e - alpha).norm());
    }

    let x = tr.element(2, 1);
    for k in all_indices() {
        let dk_x = |y: &GrassmannElement| tr.noise.derivative_power(y, &k, t);
        for j in 0..MODES {
            // D^k D_j = (-1)^{|k|_j} D^{k+e_j}
            let lhs = dk_x(&tr.noise.derivative(&x, j, t));
            let rhs = if k[j] == 0 {
                let mut up = k;
                up[j] += 1;
                tr.noise.derivative_power(&x, &up, t).scale(C64::new(parity_after(&k, j), 0.0))
            } else {
                GrassmannElement::zero(tr.alg, 2, 1)
            };
            r[6] = r[6].max(diff(&lhs, &rhs));

            // D^k Zb_j = (-1)^|k| Zb_j D^k + (-1)^{|k|_j} (k_j mod 2) g_j D^{k-e_j}
            let zb = tr.noise.zbar(j, t);
            let lhs = dk_x(&zb.g_mul(&x).unwrap());
            let mut rhs = zb
                .g_mul(&dk_x(&x))
                .unwrap()
                .scale(C64::new(parity_total(&k), 0.0));
            if k[j] % 2 == 1 {
                let mut down = k;
                down[j] -= 1;
                let extra = tr
                    .noise
                    .derivative_power(&x, &down, t)
                    .scale(C64::new(parity_after(&k, j) * tr.weight(j), 0.0));
                rhs = rhs.add(&extra).unwrap();
            }
            r[7] = r[7].max(diff(&lhs, &rhs));
        }
    }

    for j in 0..MODES {
        // E[X Z_j] = -E[D_j X]
        let lhs = a.g_mul(&tr.noise.z(j, t)).unwrap().gaussian_expect().unwrap();
        let rhs = -tr.noise.derivative(&a, j, t).gaussian_expect().unwrap();
        r[8] = r[8].max(mdiff(&lhs, &rhs));
        // E[Zb_j X] = i conj(g_j) e^{i w_j t} E[X d/dz_j] (right derivative)
        let lhs = tr.noise.zbar(j, t).g_mul(&a).unwrap().gaussian_expect().unwrap();
        let coeff = -tr.noise.zbar_coeff(j, t);
        let rhs = a
            .g_deriv(GrassmannAlgebra::z(j), Side::Right)
            .gaussian_expect()
            .unwrap()
            * coeff;
        r[9] = r[9].max(mdiff(&lhs, &rhs));
    }

    // rho^(m,n) = E[psi^(m) conj(psi^(n)(-zb))] for a random state psi(zb)
    let psi = tr.zbar_state(2);
    let aux = |k: &[u16]| tr.noise.derivative_power(&psi, k, t);
    let rho = |m: &[u16], n: &[u16]| {
        aux(m)
            .g_mul(&aux(n).negate_zbar().conjugate().unwrap())
            .unwrap()
    };
    for m in all_indices() {
        for n in all_indices() {
            let dyad = rho(&m, &n);
            for j in 0..MODES {
                let zj = tr.noise.z(j, t);
                let zbj = tr.noise.zbar(j, t);
                if m[j] == 0 {
                    let lhs = dyad.g_mul(&zj).unwrap().gaussian_expect().unwrap();
                    let mut up = m;
                    up[j] = 1;
                    let target = rho(&up, &n).gaussian_expect().unwrap();
                    let b = parity_before(&m, j);
                    r[10] = r[10].max(mdiff(&lhs, &(-&target * C64::new(b, 0.0))));
                    r[12] = r[12].max(mdiff(&lhs, &(-target)));
                }
                if n[j] == 0 {
                    let lhs = zbj.g_mul(&dyad).unwrap().gaussian_expect().unwrap();
                    let mut up = n;
                    up[j] = 1;
                    let target = rho(&m, &up).gaussian_expect().unwrap();
                    let b = parity_before(&n, j);
                    r[11] = r[11].max(mdiff(&lhs, &(&target * C64::new(b, 0.0))));
                    r[13] = r[13].max(mdiff(&lhs, &target));
                }
            }
        }
    }
    r
}

/// Evaluates every identity on `trials` random draws and reports the largest
/// residual of each.
pub fn check_identities(trials: usize, seed: u64) -> IdentityReport {
    let worst = (0..trials as u64)
        .into_par_iter()
        .map(|i| run_trial(seed, i))
        .reduce(
            || [0.0; 14],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x = x.max(y);
                }
                a
            },
        );
    let mut rows: Vec<IdentityRow> = NAMES
        .iter()
        .enumerate()
        .map(|(i, n)| IdentityRow {
            name: n.to_string(),
            max_residual: worst[i],
            trials,
            informational: false,
        })
        .collect();
    for (i, n) in PRINTED.iter().enumerate() {
        rows.push(IdentityRow {
            name: n.to_string(),
            max_residual: worst[12 + i],
            trials,
            informational: true,
        });
    }
    IdentityReport { rows }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identities_hold() {
        let rep = check_identities(20, 7);
        for r in &rep.rows {
            if !r.informational {
                assert!(r.max_residual < 1e-12, "{}: {}", r.name, r.max_residual);
            }
        }
        // without the ordering sign the dyad form fails once an earlier slot
        // is occupied
        assert!(rep.rows.iter().filter(|r| r.informational).all(|r| r.max_residual > 1e-3));
    }

    #[test]
    fn deterministic_in_seed() {
        assert_eq!(check_identities(3, 1), check_identities(3, 1));
    }

    #[test]
    fn two_mode_channel_correlation() {
        let g = [C64::new(0.3, -0.2), C64::new(0.5, 0.1)];
        let w = [0.4, -1.2];
        let bath = DiscreteBathSpec {
            channels: vec![DiscreteChannel {
                couplings: g.to_vec(),
                frequencies: w.to_vec(),
            }],
            statistics: Statistics::Fermionic,
            n_max: 1,
        };
        let noise = GrassmannNoise::new(&bath).unwrap();
        let modes = discrete_bath_modes(&g, &w).unwrap();
        for &(t, s) in &[(0.0, 0.0), (1.3, 0.2), (0.5, 2.7)] {
            let e = noise.z(0, t).g_mul(&noise.zbar(0, s)).unwrap().gaussian_expect().unwrap()[(0, 0)];
            let alpha: C64 = modes.iter().map(|m| m.eval(t - s)).sum();
            assert!((e - alpha).norm() < 1e-12);
            // values at different times anticommute
            let ab = noise.zbar(0, t).g_mul(&noise.zbar(0, s)).unwrap();
            let ba = noise.zbar(0, s).g_mul(&noise.zbar(0, t)).unwrap();
            assert!(ab.add(&ba).unwrap().max_abs() < 1e-15);
        }
    }
}
