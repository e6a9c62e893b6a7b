//! Stationary complex Gaussian noise `Z(t)` with `E[Z(t) conj Z(s)] = alpha(t - s)`
//! and `E[Z(t) Z(s)] = 0`.
//!
//! The two-sided correlation is sampled on a periodic grid of `N` points,
//! Fourier transformed to non-negative weights `S_k`, and a path is
//! `Z_i = sum_k sqrt(S_k / N) xi_k exp(-2 pi i k i / N)` with independent
//! standard complex Gaussians `xi_k`. The `xi_k` come from a ChaCha stream
//! keyed by `(seed, channel)` and positioned at `k`, so a path does not
//! depend on which thread generates it or in which order.

use std::io::{self, Write};
use std::sync::Arc;

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rustfft::{Fft, FftPlanner};

use crate::bcf::{eval_modes_two_sided, Mode};
use crate::error::{Error, Result};
use crate::system::TimeGrid;
use crate::C64;

/// Relative size of a negative spectral lobe tolerated before erroring.
pub const NEGATIVE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralWeights {
    /// `S_k`, clipped at zero, for `k = 0..N`.
    pub weights: Vec<f64>,
    /// Most negative value before clipping (0 if none).
    pub min_before_clip: f64,
    pub dt: f64,
}

impl SpectralWeights {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Angular frequency of bin `k` in the convention `exp(-i w t)`.
    pub fn frequency(&self, k: usize) -> f64 {
        let n = self.len();
        let kk = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
        2.0 * std::f64::consts::PI * kk / (n as f64 * self.dt)
    }
}

/// Periodic length: at least twice the grid plus `5 / gamma_min` padding on
/// each side, rounded up to a power of two.
fn padded_len(modes: &[Mode], grid: &TimeGrid) -> Result<usize> {
    let gmin = modes
        .iter()
        .filter(|m| m.g != C64::new(0.0, 0.0))
        .map(|m| m.w.re)
        .fold(f64::INFINITY, f64::min);
    if gmin <= 0.0 {
        return Err(Error::UndampedMode);
    }
    let pad = if gmin.is_finite() {
        (5.0 / (gmin * grid.dt())).ceil() as usize
    } else {
        0
    };
    Ok((2 * (grid.steps + pad + 1)).next_power_of_two())
}

pub fn spectral_weights(modes: &[Mode], grid: &TimeGrid) -> Result<SpectralWeights> {
    grid.check()?;
    let n = padded_len(modes, grid)?;
    let dt = grid.dt();
    let mut c: Vec<C64> = (0..n)
        .map(|m| {
            if m < n / 2 {
                eval_modes_two_sided(modes, m as f64 * dt)
            } else if m == n / 2 {
                C64::new(eval_modes_two_sided(modes, m as f64 * dt).re, 0.0)
            } else {
                eval_modes_two_sided(modes, -((n - m) as f64) * dt)
            }
        })
        .collect();
    // S_k = sum_m c_m exp(+2 pi i k m / N)
    FftPlanner::new().plan_fft_inverse(n).process(&mut c);
    let max = c.iter().map(|v| v.re).fold(0.0, f64::max);
    let min = c.iter().map(|v| v.re).fold(0.0, f64::min);
    if min < -NEGATIVE_TOLERANCE * max || (max == 0.0 && min < 0.0) {
        return Err(Error::SpectrumSignificantlyNegative { min, max });
    }
    Ok(SpectralWeights {
        weights: c.iter().map(|v| v.re.max(0.0)).collect(),
        min_before_clip: min,
        dt,
    })
}

/// One sampled noise path on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    pub channel: usize,
    pub grid: TimeGrid,
    pub values: Vec<C64>,
    pub seed: u64,
}

impl NoisePath {
    /// Cubic (four-point Lagrange) interpolation; linear extrapolation is
    /// never needed since callers stay inside the grid.
    pub fn at(&self, t: f64) -> C64 {
        let dt = self.grid.dt();
        let n = self.values.len();
        let x = ((t - self.grid.t0) / dt).clamp(0.0, (n - 1) as f64);
        let i = (x.floor() as usize).min(n - 2);
        if n < 4 {
            let f = x - i as f64;
            return self.values[i] * (1.0 - f) + self.values[i + 1] * f;
        }
        let s = i.saturating_sub(1).min(n - 4);
        let u = x - s as f64;
        let y = &self.values[s..s + 4];
        let l0 = -(u - 1.0) * (u - 2.0) * (u - 3.0) / 6.0;
        let l1 = u * (u - 2.0) * (u - 3.0) / 2.0;
        let l2 = -u * (u - 1.0) * (u - 3.0) / 2.0;
        let l3 = u * (u - 1.0) * (u - 2.0) / 6.0;
        y[0] * l0 + y[1] * l1 + y[2] * l2 + y[3] * l3
    }

    /// Columns `t, re, im`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,re,im")?;
        for (i, z) in self.values.iter().enumerate() {
            writeln!(w, "{:.17e},{:.17e},{:.17e}", self.grid.time(i), z.re, z.im)?;
        }
        Ok(())
    }
}

/// Reusable sampler for one mode list and grid.
#[derive(Clone)]
pub struct NoiseGenerator {
    amplitudes: Vec<f64>,
    grid: TimeGrid,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for NoiseGenerator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NoiseGenerator")
            .field("len", &self.amplitudes.len())
            .field("grid", &self.grid)
            .finish()
    }
}

impl NoiseGenerator {
    pub fn new(modes: &[Mode], grid: &TimeGrid) -> Result<Self> {
        let w = spectral_weights(modes, grid)?;
        let n = w.len() as f64;
        Ok(Self {
            amplitudes: w.weights.iter().map(|s| (s / n).sqrt()).collect(),
            grid: *grid,
            fft: FftPlanner::new().plan_fft_forward(w.len()),
        })
    }

    pub fn sample(&self, seed: u64, channel: usize) -> NoisePath {
        // reading the stream sequentially visits the same words as
        // `standard_complex_normal(seed, channel, k)` for k = 0, 1, ...
        let mut rng = keyed_rng(seed, channel, 0);
        let mut buf: Vec<C64> = self
            .amplitudes
            .iter()
            .map(|&a| a * box_muller(&mut rng))
            .collect();
        self.fft.process(&mut buf);
        buf.truncate(self.grid.len());
        NoisePath {
            channel,
            grid: self.grid,
            values: buf,
            seed,
        }
    }
}

pub fn sample(modes: &[Mode], grid: &TimeGrid, seed: u64, channel: usize) -> Result<NoisePath> {
    Ok(NoiseGenerator::new(modes, grid)?.sample(seed, channel))
}

/// `xi` with `E|xi|^2 = 1`, `E xi^2 = 0`, a pure function of `(seed, channel, k)`.
pub fn standard_complex_normal(seed: u64, channel: usize, k: usize) -> C64 {
    box_muller(&mut keyed_rng(seed, channel, k))
}

fn keyed_rng(seed: u64, channel: usize, k: usize) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(channel as u64);
    rng.set_word_pos(4 * k as u128);
    rng
}

fn box_muller(rng: &mut ChaCha12Rng) -> C64 {
    let scale = 1.0 / (1u64 << 53) as f64;
    let u1 = 1.0 - (rng.next_u64() >> 11) as f64 * scale;
    let u2 = (rng.next_u64() >> 11) as f64 * scale;
    C64::from_polar((-u1.ln()).sqrt(), 2.0 * std::f64::consts::PI * u2)
}

/// Empirical correlation at one lag (in grid steps).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationEstimate {
    pub lag: usize,
    /// Estimate of `E[Z(t + tau) conj Z(t)]`.
    pub value: C64,
    /// Standard error; real part for `Re value`, imaginary part for `Im value`.
    pub se: C64,
    /// Estimate of `E[Z(t + tau) Z(t)]`.
    pub zz: C64,
    pub zz_se: C64,
}

/// Time-averaged correlation per path, then mean and standard error over paths.
pub fn estimate_correlation(paths: &[NoisePath], lags: &[usize]) -> Result<Vec<CorrelationEstimate>> {
    estimate_cross_correlation(paths, paths, lags)
}

/// As [`estimate_correlation`] for `E[A(t + tau) conj B(t)]`, path by path.
pub fn estimate_cross_correlation(
    a: &[NoisePath],
    b: &[NoisePath],
    lags: &[usize],
) -> Result<Vec<CorrelationEstimate>> {
    if a.len() < 2 || a.len() != b.len() {
        return Err(Error::InsufficientTrajectories { needed: 2, got: a.len().min(b.len()) });
    }
    let grid = a[0].grid;
    if a.iter().chain(b).any(|p| p.grid != grid || p.values.len() != grid.len()) {
        return Err(Error::GridMismatch);
    }
    let n = a.len() as f64;
    lags.iter()
        .map(|&lag| {
            if lag >= grid.len() {
                return Err(Error::InvalidGrid(format!("lag {lag} exceeds grid")));
            }
            let mut s = [Stat::default(), Stat::default()];
            for (pa, pb) in a.iter().zip(b) {
                let m = grid.len() - lag;
                let (mut zc, mut zz) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
                for t in 0..m {
                    zc += pa.values[t + lag] * pb.values[t].conj();
                    zz += pa.values[t + lag] * pb.values[t];
                }
                s[0].push(zc / m as f64);
                s[1].push(zz / m as f64);
            }
            Ok(CorrelationEstimate {
                lag,
                value: s[0].mean(n),
                se: s[0].se(n),
                zz: s[1].mean(n),
                zz_se: s[1].se(n),
            })
        })
        .collect()
}

#[derive(Default)]
struct Stat {
    sum: C64,
    sq: C64,
}

impl Stat {
    fn push(&mut self, v: C64) {
        self.sum += v;
        self.sq += C64::new(v.re * v.re, v.im * v.im);
    }

    fn mean(&self, n: f64) -> C64 {
        self.sum / n
    }

    fn se(&self, n: f64) -> C64 {
        let m = self.mean(n);
        let var = |sq: f64, m: f64| ((sq - n * m * m) / (n - 1.0)).max(0.0);
        C64::new(
            (var(self.sq.re, m.re) / n).sqrt(),
            (var(self.sq.im, m.im) / n).sqrt(),
        )
    }
}
