//! Time series of reduced density matrices and their CSV form.
//!
//! Columns: `t`, then `re_ab`, `im_ab` for every element in row-major order,
//! then (ensemble runs only) `se_re_ab`, `se_im_ab` in the same order.

use std::io::{self, Write};

use crate::linalg::{max_abs_diff, CMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct DensitySeries {
    pub times: Vec<f64>,
    pub rho: Vec<CMatrix>,
    /// Standard errors with the real-part error in `re` and the
    /// imaginary-part error in `im`.
    pub se: Option<Vec<CMatrix>>,
}

impl DensitySeries {
    pub fn new(times: Vec<f64>, rho: Vec<CMatrix>) -> Self {
        Self { times, rho, se: None }
    }

    pub fn dim(&self) -> usize {
        self.rho.first().map_or(0, |m| m.nrows())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Largest element-wise deviation from `other` over all common points.
    pub fn max_deviation(&self, other: &DensitySeries) -> f64 {
        self.rho
            .iter()
            .zip(&other.rho)
            .map(|(a, b)| max_abs_diff(a, b))
            .fold(0.0, f64::max)
    }

    pub fn header(&self) -> String {
        let d = self.dim();
        let mut cols = vec!["t".to_string()];
        for a in 0..d {
            for b in 0..d {
                cols.push(format!("re_{a}{b}"));
                cols.push(format!("im_{a}{b}"));
            }
        }
        if self.se.is_some() {
            for a in 0..d {
                for b in 0..d {
                    cols.push(format!("se_re_{a}{b}"));
                    cols.push(format!("se_im_{a}{b}"));
                }
            }
        }
        cols.join(",")
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", self.header())?;
        let d = self.dim();
        for (i, t) in self.times.iter().enumerate() {
            let mut line = format!("{t:.12e}");
            let push = |line: &mut String, m: &CMatrix| {
                for a in 0..d {
                    for b in 0..d {
                        let v = m[(a, b)];
                        line.push_str(&format!(",{:.15e},{:.15e}", v.re, v.im));
                    }
                }
            };
            push(&mut line, &self.rho[i]);
            if let Some(se) = &self.se {
                push(&mut line, &se[i]);
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}
