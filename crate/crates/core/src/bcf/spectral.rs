use crate::error::{Error, Result};
use crate::C64;

/// A spectral density given as a finite pole sum `J(w) = sum_k r_k / (w - p_k)`.
///
/// Real densities come in conjugate pairs, so the imaginary part of the sum
/// cancels on the real axis. [`PoleSpectralDensity::lorentzian_pair`] builds
/// the usual even two-peak form.
#[derive(Debug, Clone, PartialEq)]
pub struct PoleSpectralDensity {
    pub poles: Vec<(C64, C64)>,
    pub label: String,
}

impl PoleSpectralDensity {
    /// Validates simple, off-axis poles. Positivity is checked separately by
    /// [`PoleSpectralDensity::check_physical`].
    pub fn new(poles: Vec<(C64, C64)>, label: impl Into<String>) -> Result<Self> {
        for (i, &(p, _)) in poles.iter().enumerate() {
            if p.im.abs() <= 1e-12 * (1.0 + p.norm()) {
                return Err(Error::PoleOnRealAxis(p));
            }
            for &(q, _) in &poles[..i] {
                if (p - q).norm() <= 1e-10 * (1.0 + p.norm()) {
                    return Err(Error::DegeneratePoles(p));
                }
            }
        }
        Ok(Self { poles, label: label.into() })
    }

    /// `kappa/pi * gamma * [1/((w-Omega)^2+gamma^2) + 1/((w+Omega)^2+gamma^2)]`.
    ///
    /// Even in `w`, integrates to `kappa` over the positive axis in the limit
    /// `Omega >> gamma`, and to `2 kappa` over the whole axis.
    pub fn lorentzian_pair(kappa: f64, omega: f64, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !(kappa >= 0.0) {
            return Err(Error::UnphysicalSpectralDensity(format!(
                "lorentzian needs kappa >= 0 and gamma > 0 (kappa={kappa}, gamma={gamma})"
            )));
        }
        let r = C64::new(0.0, -kappa / (2.0 * std::f64::consts::PI));
        let mut poles = vec![];
        for c in [omega, -omega] {
            poles.push((C64::new(c, gamma), r));
            poles.push((C64::new(c, -gamma), -r));
        }
        if omega == 0.0 {
            // both peaks coincide: merge into a single doubled pair
            poles = vec![(poles[0].0, 2.0 * r), (poles[1].0, -2.0 * r)];
        }
        Self::new(poles, format!("lorentzian(kappa={kappa}, omega={omega}, gamma={gamma})"))
    }

    pub fn eval_complex(&self, w: C64) -> C64 {
        self.poles.iter().map(|&(p, r)| r / (w - p)).sum()
    }

    pub fn eval(&self, w: f64) -> f64 {
        self.eval_complex(C64::new(w, 0.0)).re
    }

    pub fn max_pole_modulus(&self) -> f64 {
        self.poles.iter().map(|(p, _)| p.norm()).fold(0.0, f64::max)
    }

    /// Laurent coefficients at infinity: `J(w) = sum_{n>=1} c_n w^-n`, `c_n = sum r p^(n-1)`.
    pub(crate) fn laurent(&self, n_terms: usize) -> Vec<C64> {
        (1..=n_terms)
            .map(|n| self.poles.iter().map(|&(p, r)| r * p.powi(n as i32 - 1)).sum())
            .collect()
    }

    /// Samples `(0, omega_max)` and checks `J` is real, non-negative and decays.
    pub fn check_physical(&self, omega_max: f64) -> Result<()> {
        let n = 2000;
        let mut peak: f64 = 0.0;
        for i in 1..n {
            let w = omega_max * i as f64 / n as f64;
            let v = self.eval_complex(C64::new(w, 0.0));
            peak = peak.max(v.re.abs());
            if v.re < -1e-10 {
                return Err(Error::UnphysicalSpectralDensity(format!("J({w}) = {} < 0", v.re)));
            }
            if v.im.abs() > 1e-10 * (1.0 + v.re.abs()) {
                return Err(Error::UnphysicalSpectralDensity(format!(
                    "J({w}) has imaginary part {}",
                    v.im
                )));
            }
        }
        let c1: C64 = self.poles.iter().map(|&(_, r)| r).sum();
        if c1.norm() > 1e-12 * (1.0 + peak) {
            return Err(Error::UnphysicalSpectralDensity(
                "J decays like 1/w and is not integrable".into(),
            ));
        }
        Ok(())
    }

    /// Max of `|J(w) - J(-w)|` relative to `max |J|` over a symmetric sample.
    pub(crate) fn odd_residual(&self) -> f64 {
        let scale = self.max_pole_modulus().max(1.0) * 4.0;
        let mut num: f64 = 0.0;
        let mut den: f64 = 0.0;
        for i in 0..=400 {
            let w = scale * i as f64 / 400.0;
            let a = self.eval_complex(C64::new(w, 0.0));
            let b = self.eval_complex(C64::new(-w, 0.0));
            num = num.max((a - b).norm());
            den = den.max(a.norm());
        }
        num / den.max(f64::MIN_POSITIVE)
    }
}

/// Temperature and chemical potential of one bath (`k_B = 1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalParams {
    pub temperature: f64,
    pub chemical_potential: f64,
}

impl ThermalParams {
    pub fn new(temperature: f64, chemical_potential: f64) -> Result<Self> {
        if !(temperature >= 0.0) {
            return Err(Error::UnphysicalSpectralDensity(format!(
                "temperature must be >= 0, got {temperature}"
            )));
        }
        Ok(Self { temperature, chemical_potential })
    }

    /// Fermi-Dirac occupation; a step at `mu` when `T = 0`.
    pub fn fermi(&self, w: f64) -> f64 {
        let x = w - self.chemical_potential;
        if self.temperature == 0.0 {
            return if x < 0.0 {
                1.0
            } else if x > 0.0 {
                0.0
            } else {
                0.5
            };
        }
        let y = x / self.temperature;
        if y > 0.0 {
            let e = (-y).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + y.exp())
        }
    }

    /// `tanh(w / 2T)`; `sign(w)` at `T = 0`.
    pub fn tanh_half(&self, w: f64) -> f64 {
        if self.temperature == 0.0 {
            return if w == 0.0 { 0.0 } else { w.signum() };
        }
        (w / (2.0 * self.temperature)).tanh()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lorentzian_matches_closed_form() {
        let (k, o, g) = (0.7, 2.0, 0.3);
        let j = PoleSpectralDensity::lorentzian_pair(k, o, g).unwrap();
        for w in [-3.0, -0.5, 0.0, 0.1, 1.9, 2.0, 5.0] {
            let direct = k / std::f64::consts::PI
                * g
                * (1.0 / ((w - o) * (w - o) + g * g) + 1.0 / ((w + o) * (w + o) + g * g));
            let v = j.eval_complex(C64::new(w, 0.0));
            assert!((v.re - direct).abs() < 1e-14, "{w}: {} vs {direct}", v.re);
            assert!(v.im.abs() < 1e-14);
        }
        j.check_physical(50.0).unwrap();
        assert!(j.odd_residual() < 1e-14);
    }

    #[test]
    fn zero_centre_lorentzian() {
        let j = PoleSpectralDensity::lorentzian_pair(1.0, 0.0, 0.5).unwrap();
        let direct = 1.0 / std::f64::consts::PI * 0.5 * 2.0 / 0.25;
        assert!((j.eval(0.0) - direct).abs() < 1e-13);
    }

    #[test]
    fn pole_validation() {
        let r = C64::new(1.0, 0.0);
        assert!(matches!(
            PoleSpectralDensity::new(vec![(C64::new(1.0, 0.0), r)], "x"),
            Err(Error::PoleOnRealAxis(_))
        ));
        let p = C64::new(1.0, -1.0);
        assert!(matches!(
            PoleSpectralDensity::new(vec![(p, r), (p, r)], "x"),
            Err(Error::DegeneratePoles(_))
        ));
    }

    #[test]
    fn negative_density_rejected() {
        let j = PoleSpectralDensity::lorentzian_pair(1.0, 2.0, 0.3).unwrap();
        let neg = PoleSpectralDensity::new(
            j.poles.iter().map(|&(p, r)| (p, -r)).collect(),
            "neg",
        )
        .unwrap();
        assert!(neg.check_physical(10.0).is_err());
    }

    #[test]
    fn fermi_and_tanh() {
        let th = ThermalParams::new(0.0, 1.0).unwrap();
        assert_eq!(th.fermi(0.5), 1.0);
        assert_eq!(th.fermi(1.5), 0.0);
        let th = ThermalParams::new(0.5, 0.0).unwrap();
        for w in [-3.0, -0.1, 0.0, 2.0, 800.0, -800.0] {
            let lhs = 1.0 - 2.0 * th.fermi(w);
            assert!((lhs - th.tanh_half(w)).abs() < 1e-14);
        }
        let th = ThermalParams::new(0.0, f64::NEG_INFINITY).unwrap();
        assert_eq!(th.fermi(1e-9), 0.0);
        assert!(ThermalParams::new(-1.0, 0.0).is_err());
    }
}
