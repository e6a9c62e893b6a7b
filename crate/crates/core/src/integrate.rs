//! Explicit Runge–Kutta integration of complex linear-algebra ODEs.
//!
//! Every propagation module flattens its state into one contiguous complex
//! vector and hands a right-hand side `f(t, y, dy)` to [`integrate_with`].

use crate::error::{Error, Result};
use crate::system::TimeGrid;
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    /// Classical fourth-order Runge–Kutta, one step per grid interval.
    #[default]
    Rk4,
    /// Runge–Kutta–Fehlberg 4(5) with local error control. Steps are clipped
    /// so every grid point is hit exactly.
    Rkf45,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub method: Method,
    /// Local error tolerance for [`Method::Rkf45`]; ignored by RK4.
    pub tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            method: Method::Rk4,
            tol: 1e-9,
        }
    }
}

impl SolverOptions {
    pub fn rk4() -> Self {
        Self::default()
    }

    pub fn rkf45(tol: f64) -> Self {
        Self {
            method: Method::Rkf45,
            tol,
        }
    }
}

/// Integrates `y' = f(t, y)` over `grid` and returns the state at every grid
/// point (including `t0`).
pub fn integrate<F>(
    rhs: F,
    y0: &[C64],
    grid: &TimeGrid,
    method: Method,
    tol: f64,
) -> Result<Vec<Vec<C64>>>
where
    F: FnMut(f64, &[C64], &mut [C64]),
{
    let mut out = Vec::with_capacity(grid.len());
    integrate_with(rhs, y0, grid, &SolverOptions { method, tol }, |_, _, y| {
        out.push(y.to_vec())
    })?;
    Ok(out)
}

/// Streaming variant of [`integrate`]: `observer(i, t_i, y)` is called at
/// every grid point and the final state is returned.
pub fn integrate_with<F, O>(
    mut rhs: F,
    y0: &[C64],
    grid: &TimeGrid,
    opts: &SolverOptions,
    mut observer: O,
) -> Result<Vec<C64>>
where
    F: FnMut(f64, &[C64], &mut [C64]),
    O: FnMut(usize, f64, &[C64]),
{
    grid.check()?;
    if opts.method == Method::Rkf45 && !(opts.tol > 0.0) {
        return Err(Error::InvalidTolerance(opts.tol));
    }
    let mut y = y0.to_vec();
    check_finite(&y, grid.t0)?;
    observer(0, grid.t0, &y);
    match opts.method {
        Method::Rk4 => {
            let mut ws = Rk4Work::new(y.len());
            let dt = grid.dt();
            for i in 0..grid.steps {
                let t = grid.time(i);
                ws.step(&mut rhs, t, dt, &mut y);
                let tn = grid.time(i + 1);
                check_finite(&y, tn)?;
                observer(i + 1, tn, &y);
            }
        }
        Method::Rkf45 => {
            let mut ws = Rkf45Work::new(y.len());
            let min_step = 1e-14 * (grid.t1 - grid.t0);
            let mut h = grid.dt();
            let mut t = grid.t0;
            for i in 0..grid.steps {
                let target = grid.time(i + 1);
                while t < target {
                    let remaining = target - t;
                    let clipped = remaining <= h * (1.0 + 1e-12);
                    let step = if clipped { remaining } else { h };
                    if step < min_step && !clipped {
                        return Err(Error::StepUnderflow { t, min: min_step });
                    }
                    let err = ws.trial(&mut rhs, t, step, &y, opts.tol);
                    if !err.is_finite() {
                        if step < min_step {
                            return Err(Error::NonFiniteState(t));
                        }
                        h = 0.25 * step;
                        continue;
                    }
                    if err <= 1.0 {
                        y.copy_from_slice(&ws.y5);
                        t = if clipped { target } else { t + step };
                    } else if step < min_step {
                        return Err(Error::StepUnderflow { t, min: min_step });
                    }
                    let factor = if err == 0.0 {
                        5.0
                    } else {
                        (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                    };
                    // A clipped step says nothing about how large h may grow.
                    if !(clipped && err <= 1.0) || factor < 1.0 {
                        h = step * factor;
                    }
                }
                check_finite(&y, target)?;
                observer(i + 1, target, &y);
            }
        }
    }
    Ok(y)
}

fn check_finite(y: &[C64], t: f64) -> Result<()> {
    if y.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteState(t))
    }
}

struct Rk4Work {
    k1: Vec<C64>,
    k2: Vec<C64>,
    k3: Vec<C64>,
    k4: Vec<C64>,
    tmp: Vec<C64>,
}

impl Rk4Work {
    fn new(n: usize) -> Self {
        let z = vec![C64::new(0.0, 0.0); n];
        Self {
            k1: z.clone(),
            k2: z.clone(),
            k3: z.clone(),
            k4: z.clone(),
            tmp: z,
        }
    }

    fn step<F>(&mut self, rhs: &mut F, t: f64, h: f64, y: &mut [C64])
    where
        F: FnMut(f64, &[C64], &mut [C64]),
    {
        let half = 0.5 * h;
        rhs(t, y, &mut self.k1);
        for ((tmp, &yi), &k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k1) {
            *tmp = yi + k * half;
        }
        rhs(t + half, &self.tmp, &mut self.k2);
        for ((tmp, &yi), &k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k2) {
            *tmp = yi + k * half;
        }
        rhs(t + half, &self.tmp, &mut self.k3);
        for ((tmp, &yi), &k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k3) {
            *tmp = yi + k * h;
        }
        rhs(t + h, &self.tmp, &mut self.k4);
        let sixth = h / 6.0;
        for i in 0..y.len() {
            y[i] += (self.k1[i] + (self.k2[i] + self.k3[i]) * 2.0 + self.k4[i]) * sixth;
        }
    }
}

// Fehlberg tableau.
const C: [f64; 6] = [0.0, 0.25, 0.375, 12.0 / 13.0, 1.0, 0.5];
const A: [[f64; 5]; 6] = [
    [0.0; 5],
    [0.25, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 32.0, 9.0 / 32.0, 0.0, 0.0, 0.0],
    [1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0, 0.0, 0.0],
    [439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0, 0.0],
    [-8.0 / 27.0, 2.0, -3544.0 / 2565.0, 1859.0 / 4104.0, -11.0 / 40.0],
];
const B4: [f64; 6] = [25.0 / 216.0, 0.0, 1408.0 / 2565.0, 2197.0 / 4104.0, -0.2, 0.0];
const B5: [f64; 6] = [
    16.0 / 135.0,
    0.0,
    6656.0 / 12825.0,
    28561.0 / 56430.0,
    -9.0 / 50.0,
    2.0 / 55.0,
];

struct Rkf45Work {
    k: [Vec<C64>; 6],
    tmp: Vec<C64>,
    y5: Vec<C64>,
}

impl Rkf45Work {
    fn new(n: usize) -> Self {
        let z = vec![C64::new(0.0, 0.0); n];
        Self {
            k: std::array::from_fn(|_| z.clone()),
            tmp: z.clone(),
            y5: z,
        }
    }

    /// Computes a trial step into `y5` and returns the scaled error norm.
    fn trial<F>(&mut self, rhs: &mut F, t: f64, h: f64, y: &[C64], tol: f64) -> f64
    where
        F: FnMut(f64, &[C64], &mut [C64]),
    {
        for s in 0..6 {
            for i in 0..y.len() {
                let mut acc = y[i];
                for (r, &a) in A[s].iter().enumerate().take(s) {
                    acc += self.k[r][i] * (a * h);
                }
                self.tmp[i] = acc;
            }
            let (tmp, k) = (&self.tmp, &mut self.k[s]);
            rhs(t + C[s] * h, tmp, k);
        }
        let mut err = 0.0f64;
        for i in 0..y.len() {
            let mut d5 = C64::new(0.0, 0.0);
            let mut d4 = C64::new(0.0, 0.0);
            for s in 0..6 {
                d5 += self.k[s][i] * B5[s];
                d4 += self.k[s][i] * B4[s];
            }
            self.y5[i] = y[i] + d5 * h;
            let scale = tol * y[i].norm().max(self.y5[i].norm()).max(1.0);
            err = err.max(((d5 - d4) * h).norm() / scale);
        }
        err
    }
}
