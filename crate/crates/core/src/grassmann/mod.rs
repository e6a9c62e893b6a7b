//! A finite Grassmann algebra with dense coefficient tables.
//!
//! Generators are numbered `0..N`. For bath mode `l` the convention is
//! `z_l = 2l` and `conj(z_l) = 2l + 1`, so the canonical order is
//! `(z_0, zb_0, z_1, zb_1, ...)`. A monomial is a bitmask and is always read
//! in ascending generator order; every sign in this module follows from that
//! single rule.
//!
//! Coefficients are small dense matrices of one shape per element: `1 x 1`
//! for scalars, `D x 1` for state vectors, `D x D` for operators. Products
//! multiply coefficients as matrices, with `1 x 1` broadcasting.

mod identities;
mod pure;

pub use identities::{check_identities, IdentityReport, IdentityRow};
pub use pure::{
    aux_density, aux_density_general, grassmann_density, propagate_pure_fermionic,
    reduced_density_grassmann, GrassmannNoise, PureHierarchy, PureOutput, PureState,
};

use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::C64;

/// Generator count limit (coefficient tables have `2^N` entries).
pub const MAX_GENERATORS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GrassmannAlgebra {
    pub n_gen: usize,
}

impl GrassmannAlgebra {
    pub fn new(n_gen: usize) -> Result<Self> {
        if n_gen > MAX_GENERATORS {
            return Err(Error::TooManyGenerators(n_gen));
        }
        Ok(Self { n_gen })
    }

    /// Algebra of `modes` pairs `(z_l, zb_l)`.
    pub fn paired(modes: usize) -> Result<Self> {
        Self::new(2 * modes)
    }

    pub fn size(&self) -> usize {
        1 << self.n_gen
    }

    pub fn z(l: usize) -> usize {
        2 * l
    }

    pub fn zbar(l: usize) -> usize {
        2 * l + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrassmannElement {
    pub algebra: GrassmannAlgebra,
    rows: usize,
    cols: usize,
    /// `coeffs[mask * rows * cols + r * cols + c]`
    coeffs: Vec<C64>,
}

/// `(-1)^n`
fn sign(n: u32) -> f64 {
    if n.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Sign of `m_a m_b -> m_{a|b}` for disjoint masks: one factor `-1` per pair
/// `i in a, j in b` with `j < i`.
pub fn product_sign(a: u32, b: u32) -> f64 {
    let mut n = 0;
    let mut rest = a;
    while rest != 0 {
        let i = rest.trailing_zeros();
        n += (b & ((1u32 << i) - 1)).count_ones();
        rest &= rest - 1;
    }
    sign(n)
}

impl GrassmannElement {
    pub fn zero(algebra: GrassmannAlgebra, rows: usize, cols: usize) -> Self {
        Self {
            algebra,
            rows,
            cols,
            coeffs: vec![C64::new(0.0, 0.0); algebra.size() * rows * cols],
        }
    }

    pub fn scalar(algebra: GrassmannAlgebra, v: C64) -> Self {
        let mut e = Self::zero(algebra, 1, 1);
        e.coeffs[0] = v;
        e
    }

    /// `coeff * generator`
    pub fn generator(algebra: GrassmannAlgebra, g: usize, coeff: C64) -> Self {
        let mut e = Self::zero(algebra, 1, 1);
        e.coeffs[1 << g] = coeff;
        e
    }

    /// Element with the given coefficient on a single monomial.
    pub fn monomial(algebra: GrassmannAlgebra, mask: usize, coeff: &CMatrix) -> Self {
        let mut e = Self::zero(algebra, coeff.nrows(), coeff.ncols());
        e.set_coeff(mask, coeff);
        e
    }

    /// Builds an element from `f(mask)` for every mask.
    pub fn from_fn(
        algebra: GrassmannAlgebra,
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize, usize) -> C64,
    ) -> Self {
        let mut e = Self::zero(algebra, rows, cols);
        let rc = rows * cols;
        for m in 0..algebra.size() {
            for r in 0..rows {
                for c in 0..cols {
                    e.coeffs[m * rc + r * cols + c] = f(m, r, c);
                }
            }
        }
        e
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn coeff(&self, mask: usize) -> CMatrix {
        let rc = self.rows * self.cols;
        CMatrix::from_row_slice(self.rows, self.cols, &self.coeffs[mask * rc..(mask + 1) * rc])
    }

    pub fn coeff_slice(&self, mask: usize) -> &[C64] {
        let rc = self.rows * self.cols;
        &self.coeffs[mask * rc..(mask + 1) * rc]
    }

    pub fn set_coeff(&mut self, mask: usize, v: &CMatrix) {
        assert_eq!(v.shape(), (self.rows, self.cols));
        let rc = self.rows * self.cols;
        for r in 0..self.rows {
            for c in 0..self.cols {
                self.coeffs[mask * rc + r * self.cols + c] = v[(r, c)];
            }
        }
    }

    pub fn raw(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn raw_mut(&mut self) -> &mut [C64] {
        &mut self.coeffs
    }

    fn same_shape(&self, o: &Self) -> Result<()> {
        if self.algebra != o.algebra {
            return Err(Error::AlgebraMismatch(self.algebra.n_gen, o.algebra.n_gen));
        }
        if self.shape() != o.shape() {
            return Err(Error::DimensionMismatch(format!(
                "coefficient shapes {:?} and {:?}",
                self.shape(),
                o.shape()
            )));
        }
        Ok(())
    }

    pub fn add(&self, o: &Self) -> Result<Self> {
        self.same_shape(o)?;
        let mut r = self.clone();
        for (x, y) in r.coeffs.iter_mut().zip(&o.coeffs) {
            *x += y;
        }
        Ok(r)
    }

    pub fn sub(&self, o: &Self) -> Result<Self> {
        self.add(&o.scale(C64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut r = self.clone();
        for x in &mut r.coeffs {
            *x *= s;
        }
        r
    }

    /// Multiplies every coefficient by `op` from the left.
    pub fn left_op(&self, op: &CMatrix) -> Self {
        let mut r = Self::zero(self.algebra, op.nrows(), self.cols);
        for m in 0..self.algebra.size() {
            let c = op * self.coeff(m);
            r.set_coeff(m, &c);
        }
        r
    }

    /// Multiplies every coefficient by `op` from the right.
    pub fn right_op(&self, op: &CMatrix) -> Self {
        let mut r = Self::zero(self.algebra, self.rows, op.ncols());
        for m in 0..self.algebra.size() {
            let c = self.coeff(m) * op;
            r.set_coeff(m, &c);
        }
        r
    }

    pub fn max_abs_diff(&self, o: &Self) -> f64 {
        self.coeffs
            .iter()
            .zip(&o.coeffs)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|a| a.norm()).fold(0.0, f64::max)
    }

    /// Largest coefficient among monomials of the given degree parity.
    pub fn max_abs_with_parity(&self, odd: bool) -> f64 {
        let rc = self.rows * self.cols;
        (0..self.algebra.size())
            .filter(|m| (m.count_ones() % 2 == 1) == odd)
            .flat_map(|m| self.coeffs[m * rc..(m + 1) * rc].iter())
            .map(|a| a.norm())
            .fold(0.0, f64::max)
    }

    /// Product `a * b`.
    pub fn g_mul(&self, b: &Self) -> Result<Self> {
        if self.algebra != b.algebra {
            return Err(Error::AlgebraMismatch(self.algebra.n_gen, b.algebra.n_gen));
        }
        let (ar, ac, br, bc) = (self.rows, self.cols, b.rows, b.cols);
        let (rows, cols, inner) = if ac == br {
            (ar, bc, ac)
        } else if ar * ac == 1 {
            (br, bc, 0)
        } else if br * bc == 1 {
            (ar, ac, 0)
        } else {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply coefficients {ar}x{ac} and {br}x{bc}"
            )));
        };
        let size = self.algebra.size();
        let full = (size - 1) as u32;
        let mut out = Self::zero(self.algebra, rows, cols);
        let (rca, rcb, rco) = (ar * ac, br * bc, rows * cols);
        for ma in 0..size {
            let ca = &self.coeffs[ma * rca..(ma + 1) * rca];
            if ca.iter().all(|x| *x == C64::new(0.0, 0.0)) {
                continue;
            }
            let comp = full & !(ma as u32);
            let mut mb = comp;
            loop {
                let cb = &b.coeffs[mb as usize * rcb..(mb as usize + 1) * rcb];
                if cb.iter().any(|x| *x != C64::new(0.0, 0.0)) {
                    let s = product_sign(ma as u32, mb);
                    let mo = (ma as u32 | mb) as usize;
                    let o = &mut out.coeffs[mo * rco..(mo + 1) * rco];
                    if inner > 0 {
                        for r in 0..rows {
                            for c in 0..cols {
                                let mut acc = C64::new(0.0, 0.0);
                                for k in 0..inner {
                                    acc += ca[r * ac + k] * cb[k * bc + c];
                                }
                                o[r * cols + c] += acc * s;
                            }
                        }
                    } else if rca == 1 {
                        for (x, y) in o.iter_mut().zip(cb) {
                            *x += ca[0] * y * s;
                        }
                    } else {
                        for (x, y) in o.iter_mut().zip(ca) {
                            *x += y * cb[0] * s;
                        }
                    }
                }
                if mb == 0 {
                    break;
                }
                mb = (mb - 1) & comp;
            }
        }
        Ok(out)
    }

    /// Left or right derivative with respect to generator `g`.
    pub fn g_deriv(&self, g: usize, side: Side) -> Self {
        let rc = self.rows * self.cols;
        let mut out = Self::zero(self.algebra, self.rows, self.cols);
        let bit = 1usize << g;
        for m in 0..self.algebra.size() {
            if m & bit == 0 {
                continue;
            }
            let crossings = match side {
                Side::Left => (m & (bit - 1)).count_ones(),
                Side::Right => (m & !(bit | (bit - 1))).count_ones(),
            };
            let s = sign(crossings);
            let to = m & !bit;
            for i in 0..rc {
                out.coeffs[to * rc + i] += self.coeffs[m * rc + i] * s;
            }
        }
        out
    }

    fn check_paired(&self) -> Result<()> {
        if !self.algebra.n_gen.is_multiple_of(2) {
            return Err(Error::UnpairedGenerators(self.algebra.n_gen));
        }
        Ok(())
    }

    /// Vacuum Gaussian average `int prod dzb dz exp(-sum zb z) a`, normalized
    /// to `E[1] = 1` and `E[z_l zb_l] = 1`. A monomial contributes exactly when
    /// every pair `(z_l, zb_l)` is either fully present or absent.
    pub fn gaussian_expect(&self) -> Result<CMatrix> {
        self.check_paired()?;
        let pairs = self.algebra.n_gen / 2;
        let mut acc = CMatrix::zeros(self.rows, self.cols);
        for m in 0..self.algebra.size() {
            let balanced = (0..pairs).all(|l| (m >> (2 * l) & 1) == (m >> (2 * l + 1) & 1));
            if balanced {
                acc += self.coeff(m);
            }
        }
        Ok(acc)
    }

    /// Same average by explicit Berezin integration: multiply by the weight
    /// `prod_l (1 + z_l zb_l)` and eliminate `z_l`, then `zb_l`, mode by mode.
    pub fn gaussian_expect_berezin(&self) -> Result<CMatrix> {
        self.check_paired()?;
        let pairs = self.algebra.n_gen / 2;
        let mut x = self.clone();
        for l in 0..pairs {
            let zz = Self::generator(self.algebra, GrassmannAlgebra::z(l), C64::new(1.0, 0.0))
                .g_mul(&Self::generator(
                    self.algebra,
                    GrassmannAlgebra::zbar(l),
                    C64::new(1.0, 0.0),
                ))?;
            let w = Self::scalar(self.algebra, C64::new(1.0, 0.0)).add(&zz)?;
            x = w.g_mul(&x)?;
        }
        for l in 0..pairs {
            x = x
                .g_deriv(GrassmannAlgebra::z(l), Side::Left)
                .g_deriv(GrassmannAlgebra::zbar(l), Side::Left);
        }
        Ok(x.coeff(0))
    }

    /// Conjugation: `z_l <-> zb_l`, order of every monomial reversed, and
    /// coefficients replaced by their adjoints.
    pub fn conjugate(&self) -> Result<Self> {
        self.check_paired()?;
        let mut out = Self::zero(self.algebra, self.cols, self.rows);
        for m in 0..self.algebra.size() {
            let k = m.count_ones();
            let mut swapped = 0usize;
            for g in 0..self.algebra.n_gen {
                if m >> g & 1 == 1 {
                    swapped |= 1 << (g ^ 1);
                }
            }
            // reversing k factors gives k(k-1)/2 inversions, except that a
            // complete pair (z_l, zb_l) maps back onto itself in order
            let pairs = (0..self.algebra.n_gen / 2).filter(|l| m >> (2 * l) & 3 == 3).count() as u32;
            let s = sign(k * k.saturating_sub(1) / 2 - pairs);
            let c = self.coeff(m).adjoint() * C64::new(s, 0.0);
            out.set_coeff(swapped, &c);
        }
        Ok(out)
    }

    /// Substitution `zb_l -> -zb_l` for every mode.
    pub fn negate_zbar(&self) -> Self {
        let rc = self.rows * self.cols;
        let odd_bits: usize = (0..self.algebra.n_gen).filter(|g| g % 2 == 1).map(|g| 1 << g).sum();
        let mut out = self.clone();
        for m in 0..self.algebra.size() {
            if (m & odd_bits).count_ones() % 2 == 1 {
                for x in &mut out.coeffs[m * rc..(m + 1) * rc] {
                    *x = -*x;
                }
            }
        }
        out
    }
}
