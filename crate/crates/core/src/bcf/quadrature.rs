use std::collections::BinaryHeap;
use std::f64::consts::PI;

use super::spectral::{PoleSpectralDensity, ThermalParams};
use crate::error::{Error, Result};
use crate::C64;

/// Which thermal correlation function to integrate (all over `w >= 0`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcfKind {
    /// `int J(w) (1 - n(w)) exp(-i w t)`
    AlphaFermi,
    /// `int J(w) n(w) exp(+i w t)`
    BetaFermi,
    /// `int J(w) (cos wt - i tanh(w/2T) sin wt)`
    SpinBathAlpha,
}

const REL_TOL: f64 = 1e-11;
const MAX_PANELS: usize = 400_000;
const LAURENT_TERMS: usize = 12;

// Gauss-Kronrod 7-15 (QUADPACK qk15).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_5,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_48,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224,
    0.063_092_092_629_978_56,
    0.104_790_010_322_250_19,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_42,
    0.204_432_940_075_298_89,
    0.209_482_141_084_727_82,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_64,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &impl Fn(f64) -> C64, a: f64, b: f64) -> (C64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for i in 0..7 {
        let x = h * XGK[i];
        let s = f(c - x) + f(c + x);
        k += s * WGK[i];
        if i % 2 == 1 {
            g += s * WG[i / 2];
        }
    }
    (k * h, ((k - g) * h).norm())
}

struct Panel {
    a: f64,
    b: f64,
    val: C64,
    err: f64,
}

impl PartialEq for Panel {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Panel {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&o.err)
    }
}

/// Global adaptive Gauss-Kronrod over consecutive breakpoints.
fn adaptive(f: &impl Fn(f64) -> C64, breaks: &[f64], abs_floor: f64) -> Result<C64> {
    let mut heap = BinaryHeap::new();
    let mut total = C64::new(0.0, 0.0);
    let mut err = 0.0;
    for w in breaks.windows(2) {
        let (val, e) = gk15(f, w[0], w[1]);
        total += val;
        err += e;
        heap.push(Panel { a: w[0], b: w[1], val, err: e });
    }
    let mut panels = heap.len();
    while err > (REL_TOL * total.norm()).max(abs_floor) {
        if panels > MAX_PANELS {
            return Err(Error::QuadratureNotConverged(format!(
                "error estimate {err:e} after {panels} panels"
            )));
        }
        let p = heap.pop().expect("non-empty heap");
        let m = 0.5 * (p.a + p.b);
        if m <= p.a || m >= p.b {
            return Err(Error::QuadratureNotConverged(format!(
                "interval collapsed at {m} with error {:e}",
                p.err
            )));
        }
        let (v1, e1) = gk15(f, p.a, m);
        let (v2, e2) = gk15(f, m, p.b);
        total += v1 + v2 - p.val;
        err += e1 + e2 - p.err;
        heap.push(Panel { a: p.a, b: m, val: v1, err: e1 });
        heap.push(Panel { a: m, b: p.b, val: v2, err: e2 });
        panels += 1;
    }
    // recompute to shed accumulated rounding in the running sum
    Ok(heap.iter().map(|p| p.val).sum())
}

/// Exponential integral `E_1(z)` for `Re z >= 0`, `z != 0`.
pub fn exp_integral_e1(z: C64) -> C64 {
    const EULER: f64 = 0.577_215_664_901_532_9;
    if z.norm() < 2.0 {
        let mut sum = C64::new(0.0, 0.0);
        let mut term = C64::new(1.0, 0.0);
        for k in 1..200 {
            term *= -z / k as f64;
            let add = term / k as f64;
            sum += add;
            if add.norm() < 1e-17 * sum.norm().max(1e-300) {
                break;
            }
        }
        -EULER - z.ln() - sum
    } else {
        // modified Lentz on the even continued fraction
        let tiny = 1e-300;
        let mut b = z + 1.0;
        let mut c = C64::new(1.0 / tiny, 0.0);
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..100_000 {
            let an = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (an * d + b);
            c = b + an / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).norm() < 1e-16 {
                break;
            }
        }
        h * (-z).exp()
    }
}

/// `int_a^inf w^-n exp(-i w t) dw` for `n = 2..=n_max`, index `n - 2`.
fn power_tail(a: f64, t: f64, n_max: usize) -> Vec<C64> {
    let mut out = Vec::with_capacity(n_max - 1);
    if t == 0.0 {
        for n in 2..=n_max {
            out.push(C64::new(a.powi(1 - n as i32) / (n as f64 - 1.0), 0.0));
        }
        return out;
    }
    let z = C64::new(0.0, a * t);
    let ez = (-z).exp();
    let mut en = exp_integral_e1(z);
    for n in 1..n_max {
        en = (ez - z * en) / n as f64;
        out.push(en * a.powi(-(n as i32)));
    }
    out
}

/// Direct numerical evaluation of a thermal correlation function.
///
/// The positive axis is cut at `a = max(100 max|p|, |mu| + 60 T)`; beyond it the
/// thermal factor is 1 (or 0 for `BetaFermi`) to double precision and the
/// remainder is integrated analytically from the Laurent series of `J`.
pub fn thermal_bcf_quadrature(
    j: &PoleSpectralDensity,
    th: &ThermalParams,
    kind: BcfKind,
    t: f64,
) -> Result<C64> {
    let pmax = j.max_pole_modulus().max(1e-3);
    let mu = th.chemical_potential;
    let mut a = 100.0 * pmax;
    if th.temperature > 0.0 {
        let edge = if mu.is_finite() { mu.abs() } else { 0.0 };
        let shift = match kind {
            BcfKind::SpinBathAlpha => 0.0,
            _ => edge,
        };
        a = a.max(shift + 60.0 * th.temperature);
    } else if mu.is_finite() && kind != BcfKind::SpinBathAlpha {
        a = a.max(2.0 * mu.abs());
    }

    let mut breaks = vec![0.0, a];
    for &(p, _) in &j.poles {
        for k in [0.0, -1.0, 1.0, -5.0, 5.0] {
            breaks.push(p.re + k * p.im.abs());
        }
    }
    let thermal_centre = match kind {
        BcfKind::SpinBathAlpha => Some(0.0),
        _ if mu.is_finite() => Some(mu),
        _ => None,
    };
    if let Some(c) = thermal_centre {
        breaks.push(c);
        for k in [1.0, 3.0, 10.0] {
            breaks.push(c + k * th.temperature);
            breaks.push(c - k * th.temperature);
        }
    }
    breaks.retain(|x| x.is_finite() && *x >= 0.0 && *x <= a);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|x, y| (*x - *y).abs() <= 1e-14 * a);
    if t != 0.0 {
        let half = PI / t.abs();
        let mut fine = vec![breaks[0]];
        for w in breaks.windows(2) {
            let n = ((w[1] - w[0]) / half).ceil().max(1.0) as usize;
            for i in 1..=n {
                fine.push(w[0] + (w[1] - w[0]) * i as f64 / n as f64);
            }
        }
        breaks = fine;
    }

    let f = |w: f64| -> C64 {
        let jw = j.eval(w);
        let (s, c) = (w * t).sin_cos();
        match kind {
            BcfKind::AlphaFermi => C64::new(c, -s) * (jw * (1.0 - th.fermi(w))),
            BcfKind::BetaFermi => C64::new(c, s) * (jw * th.fermi(w)),
            BcfKind::SpinBathAlpha => C64::new(c, -s * th.tanh_half(w)) * jw,
        }
    };
    // scale for the absolute error floor: int |J| ~ peak height * width
    let scale: f64 = j.poles.iter().map(|(_, r)| r.norm()).sum::<f64>() * PI;
    let body = adaptive(&f, &breaks, 1e-15 * scale.max(1e-300))?;

    let tail = match kind {
        BcfKind::BetaFermi => C64::new(0.0, 0.0),
        _ => {
            let c = j.laurent(LAURENT_TERMS);
            let pw = power_tail(a, t, LAURENT_TERMS);
            // c[0] is the 1/w coefficient, zero for an integrable density
            (2..=LAURENT_TERMS).map(|n| c[n - 1] * pw[n - 2]).sum::<C64>()
                + if c[0].norm() > 0.0 {
                    c[0] * exp_integral_e1(C64::new(0.0, a * t))
                } else {
                    C64::new(0.0, 0.0)
                }
        }
    };
    Ok(body + tail)
}
