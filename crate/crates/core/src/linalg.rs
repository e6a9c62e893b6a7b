//! Dense complex linear algebra helpers.
//!
//! Public types use [`CMatrix`] (column-major `nalgebra` storage). The
//! propagation kernels work on flat row-major slices of `d*d` entries, which
//! is the layout of every flattened hierarchy state.

use nalgebra::DMatrix;

use crate::C64;

pub type CMatrix = DMatrix<C64>;

pub fn zeros(d: usize) -> CMatrix {
    CMatrix::zeros(d, d)
}

pub fn identity(d: usize) -> CMatrix {
    CMatrix::identity(d, d)
}

/// Builds a matrix from row-major entries.
pub fn from_rows(d: usize, rows: &[C64]) -> CMatrix {
    assert_eq!(rows.len(), d * d);
    CMatrix::from_row_slice(d, d, rows)
}

pub fn to_row_major(m: &CMatrix) -> Vec<C64> {
    let (r, c) = m.shape();
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            out.push(m[(i, j)]);
        }
    }
    out
}

pub fn dagger(m: &CMatrix) -> CMatrix {
    m.adjoint()
}

/// `max |m - m^dag|` over all entries.
pub fn hermiticity_residual(m: &CMatrix) -> f64 {
    let (r, c) = m.shape();
    if r != c {
        return f64::INFINITY;
    }
    let mut worst = 0.0f64;
    for i in 0..r {
        for j in 0..c {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

/// Smallest eigenvalue of the hermitian part of `m`.
pub fn min_eigenvalue_hermitian(m: &CMatrix) -> f64 {
    let h = (m + m.adjoint()).scale(0.5);
    h.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn trace(m: &CMatrix) -> C64 {
    m.diagonal().iter().sum()
}

/// `a (x) b` with `a` the slow index.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Unitary propagator `exp(-i h t)` for hermitian `h` via eigendecomposition.
pub fn unitary_propagator(h: &CMatrix, t: f64) -> CMatrix {
    let eig = h.clone().symmetric_eigen();
    let v = &eig.eigenvectors;
    let phases = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        h.nrows(),
        eig.eigenvalues.iter().map(|&e| C64::new(0.0, -e * t).exp()),
    ));
    v * phases * v.adjoint()
}

// ---------------------------------------------------------------------------
// Row-major kernels. All matrices are `d x d`.

/// `out += alpha * a * b`
#[inline]
pub fn gemm_acc(out: &mut [C64], a: &[C64], b: &[C64], d: usize, alpha: C64) {
    for i in 0..d {
        let arow = &a[i * d..(i + 1) * d];
        let orow = &mut out[i * d..(i + 1) * d];
        for (k, &aik) in arow.iter().enumerate() {
            let s = alpha * aik;
            if s == C64::new(0.0, 0.0) {
                continue;
            }
            let brow = &b[k * d..(k + 1) * d];
            for (o, &bkj) in orow.iter_mut().zip(brow) {
                *o += s * bkj;
            }
        }
    }
}

/// `out += alpha * a * x` for a row-major matrix and a vector.
#[inline]
pub fn gemv_acc(out: &mut [C64], a: &[C64], x: &[C64], d: usize, alpha: C64) {
    for i in 0..d {
        let arow = &a[i * d..(i + 1) * d];
        let mut acc = C64::new(0.0, 0.0);
        for (&aij, &xj) in arow.iter().zip(x) {
            acc += aij * xj;
        }
        out[i] += alpha * acc;
    }
}

#[inline]
pub fn axpy(out: &mut [C64], x: &[C64], alpha: C64) {
    for (o, &v) in out.iter_mut().zip(x) {
        *o += alpha * v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn gemm_matches_nalgebra() {
        let a = from_rows(2, &[c(1.0, 2.0), c(0.5, 0.0), c(-1.0, 0.3), c(0.0, 1.0)]);
        let b = from_rows(2, &[c(0.2, 0.0), c(1.0, -1.0), c(3.0, 0.5), c(0.0, 0.0)]);
        let mut out = vec![C64::new(0.0, 0.0); 4];
        gemm_acc(&mut out, &to_row_major(&a), &to_row_major(&b), 2, c(0.0, 2.0));
        let expected = (&a * &b) * c(0.0, 2.0);
        assert!(max_abs_diff(&from_rows(2, &out), &expected) < 1e-14);
    }

    #[test]
    fn propagator_is_unitary() {
        let h = from_rows(2, &[c(1.0, 0.0), c(0.3, -0.2), c(0.3, 0.2), c(-0.5, 0.0)]);
        let u = unitary_propagator(&h, 1.7);
        let id = &u * u.adjoint();
        assert!(max_abs_diff(&id, &identity(2)) < 1e-13);
    }
}
