//! Sparse operators and the handful of dense kernels the solvers need.
//!
//! Operators are stored in compressed sparse row (CSR) form. Dense square
//! matrices (density operators, derivatives) are plain row-major `Vec<C64>`
//! buffers of length `dim * dim`; the kernels here operate on those slices
//! directly so that master-equation right-hand sides never allocate.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{Error, Result};

const ZERO: C64 = C64::new(0.0, 0.0);

/// Square sparse complex matrix in CSR layout.
#[derive(Debug, Clone, PartialEq)]
pub struct LinOp {
    dim: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<C64>,
}

impl LinOp {
    /// Builds an operator from `(row, col, value)` triplets. Duplicate entries
    /// are summed; entries that sum to exactly zero are dropped.
    pub fn from_triplets<I>(dim: usize, triplets: I) -> Self
    where
        I: IntoIterator<Item = (usize, usize, C64)>,
    {
        let mut trip: Vec<(usize, usize, C64)> = triplets.into_iter().collect();
        trip.sort_unstable_by_key(|&(r, c, _)| (r, c));

        let mut indptr = vec![0usize; dim + 1];
        let mut indices = Vec::with_capacity(trip.len());
        let mut values: Vec<C64> = Vec::with_capacity(trip.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in trip {
            assert!(r < dim && c < dim, "triplet ({r}, {c}) outside {dim}x{dim}");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..dim {
            indptr[r + 1] += indptr[r];
        }
        Self { dim, indptr, indices, values }.pruned()
    }

    pub fn zeros(dim: usize) -> Self {
        Self { dim, indptr: vec![0; dim + 1], indices: Vec::new(), values: Vec::new() }
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(&vec![C64::new(1.0, 0.0); dim])
    }

    pub fn diagonal(diag: &[C64]) -> Self {
        Self::from_triplets(diag.len(), diag.iter().enumerate().map(|(i, &v)| (i, i, v)))
    }

    fn pruned(self) -> Self {
        if self.values.iter().all(|v| *v != ZERO) {
            return self;
        }
        let mut indptr = vec![0usize; self.dim + 1];
        let mut indices = Vec::with_capacity(self.indices.len());
        let mut values = Vec::with_capacity(self.values.len());
        for r in 0..self.dim {
            for k in self.indptr[r]..self.indptr[r + 1] {
                if self.values[k] != ZERO {
                    indices.push(self.indices[k]);
                    values.push(self.values[k]);
                }
            }
            indptr[r + 1] = indices.len();
        }
        Self { dim: self.dim, indptr, indices, values }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_zero(&self) -> bool {
        self.values.is_empty()
    }

    /// Nonzero entries of row `r` as `(col, value)`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    /// All nonzero entries as `(row, col, value)`.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.dim).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        let span = self.indptr[r]..self.indptr[r + 1];
        match self.indices[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => ZERO,
        }
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(self.dim, self.triplets().map(|(r, c, v)| (c, r, v.conj())))
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(self.dim, self.triplets().map(|(r, c, v)| (c, r, v)))
    }

    pub fn conj(&self) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v = v.conj());
        out
    }

    pub fn scaled(&self, factor: C64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= factor);
        out.pruned()
    }

    /// Sparse-sparse product `self * rhs`.
    pub fn matmul(&self, rhs: &LinOp) -> Self {
        assert_eq!(self.dim, rhs.dim, "matmul dimension mismatch");
        let dim = self.dim;
        let mut acc = vec![ZERO; dim];
        let mut marker = vec![usize::MAX; dim];
        let mut touched = Vec::new();
        let mut indptr = vec![0usize; dim + 1];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for r in 0..dim {
            touched.clear();
            for (k, a) in self.row(r) {
                for (c, b) in rhs.row(k) {
                    if marker[c] != r {
                        marker[c] = r;
                        acc[c] = ZERO;
                        touched.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            touched.sort_unstable();
            for &c in &touched {
                if acc[c] != ZERO {
                    indices.push(c);
                    values.push(acc[c]);
                }
            }
            indptr[r + 1] = indices.len();
        }
        Self { dim, indptr, indices, values }
    }

    /// `y = self * x`.
    pub fn apply(&self, x: &[C64], y: &mut [C64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(y.len(), self.dim);
        for (r, out) in y.iter_mut().enumerate() {
            let mut s = ZERO;
            for k in self.indptr[r]..self.indptr[r + 1] {
                s += self.values[k] * x[self.indices[k]];
            }
            *out = s;
        }
    }

    /// `y += factor * self * x`.
    pub fn apply_add(&self, factor: C64, x: &[C64], y: &mut [C64]) {
        for (r, out) in y.iter_mut().enumerate() {
            let mut s = ZERO;
            for k in self.indptr[r]..self.indptr[r + 1] {
                s += self.values[k] * x[self.indices[k]];
            }
            *out += factor * s;
        }
    }

    pub fn apply_vec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![ZERO; self.dim];
        self.apply(x, &mut y);
        y
    }

    /// `out += factor * self * dense` for row-major `dim x dim` matrices.
    pub fn left_mul_dense_add(&self, factor: C64, dense: &[C64], out: &mut [C64]) {
        let d = self.dim;
        debug_assert_eq!(dense.len(), d * d);
        debug_assert_eq!(out.len(), d * d);
        for r in 0..d {
            let out_row = &mut out[r * d..(r + 1) * d];
            for k in self.indptr[r]..self.indptr[r + 1] {
                let v = factor * self.values[k];
                let src = &dense[self.indices[k] * d..(self.indices[k] + 1) * d];
                for (o, s) in out_row.iter_mut().zip(src) {
                    *o += v * s;
                }
            }
        }
    }

    /// `out += factor * self * dense` for row-major `dim x dim` matrices,
    /// parallel over rows.
    pub fn par_left_mul_dense_add(&self, factor: C64, dense: &[C64], out: &mut [C64]) {
        let d = self.dim;
        out.par_chunks_mut(d).enumerate().for_each(|(r, out_row)| {
            for k in self.indptr[r]..self.indptr[r + 1] {
                let v = factor * self.values[k];
                let src = &dense[self.indices[k] * d..(self.indices[k] + 1) * d];
                for (o, s) in out_row.iter_mut().zip(src) {
                    *o += v * s;
                }
            }
        });
    }

    /// `out += dense * self^T` for row-major `dim x dim` matrices, i.e.
    /// `out[i][j] += sum_k dense[i][k] * self[j][k]`.
    pub fn par_right_mul_transposed_add(&self, dense: &[C64], out: &mut [C64]) {
        let d = self.dim;
        out.par_chunks_mut(d).enumerate().for_each(|(i, out_row)| {
            let src = &dense[i * d..(i + 1) * d];
            for (j, o) in out_row.iter_mut().enumerate() {
                let mut s = ZERO;
                for k in self.indptr[j]..self.indptr[j + 1] {
                    s += src[self.indices[k]] * self.values[k];
                }
                *o += s;
            }
        });
    }

    /// `out += factor * self * dense * self^dagger`.
    pub fn par_sandwich_add(&self, factor: f64, dense: &[C64], out: &mut [C64]) {
        let d = self.dim;
        out.par_chunks_mut(d).enumerate().for_each(|(i, out_row)| {
            for ki in self.indptr[i]..self.indptr[i + 1] {
                let a = self.values[ki] * factor;
                let src = &dense[self.indices[ki] * d..(self.indices[ki] + 1) * d];
                for (j, o) in out_row.iter_mut().enumerate() {
                    for kj in self.indptr[j]..self.indptr[j + 1] {
                        *o += a * src[self.indices[kj]] * self.values[kj].conj();
                    }
                }
            }
        });
    }

    /// `<psi| self |psi>`.
    pub fn expectation(&self, psi: &[C64]) -> C64 {
        let mut s = ZERO;
        for r in 0..self.dim {
            let mut row = ZERO;
            for k in self.indptr[r]..self.indptr[r + 1] {
                row += self.values[k] * psi[self.indices[k]];
            }
            s += psi[r].conj() * row;
        }
        s
    }

    /// `Tr(self * rho)` for a row-major dense `rho`.
    pub fn trace_with(&self, rho: &[C64]) -> C64 {
        let d = self.dim;
        self.triplets().map(|(r, c, v)| v * rho[c * d + r]).sum()
    }

    /// Largest entry of `|self - self^dagger|`.
    pub fn hermiticity_error(&self) -> f64 {
        self.triplets()
            .map(|(r, c, v)| (v - self.get(c, r).conj()).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_error() <= tol
    }

    /// Largest entry of `|self - other|`.
    pub fn max_abs_diff(&self, other: &LinOp) -> f64 {
        (self - other).values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn commutator(&self, other: &LinOp) -> LinOp {
        &self.matmul(other) - &other.matmul(self)
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (r, c, v) in self.triplets() {
            m[(r, c)] = v;
        }
        m
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &LinOp) -> LinOp {
        let d = other.dim;
        LinOp::from_triplets(
            self.dim * d,
            self.triplets().flat_map(|(r1, c1, v1)| {
                other.triplets().map(move |(r2, c2, v2)| (r1 * d + r2, c1 * d + c2, v1 * v2))
            }),
        )
    }

    fn combine(&self, other: &LinOp, sign: f64) -> LinOp {
        assert_eq!(self.dim, other.dim, "operator dimension mismatch");
        LinOp::from_triplets(
            self.dim,
            self.triplets().chain(other.triplets().map(|(r, c, v)| (r, c, v * sign))),
        )
    }
}

impl Add for &LinOp {
    type Output = LinOp;
    fn add(self, rhs: &LinOp) -> LinOp {
        self.combine(rhs, 1.0)
    }
}

impl Sub for &LinOp {
    type Output = LinOp;
    fn sub(self, rhs: &LinOp) -> LinOp {
        self.combine(rhs, -1.0)
    }
}

impl Mul for &LinOp {
    type Output = LinOp;
    fn mul(self, rhs: &LinOp) -> LinOp {
        self.matmul(rhs)
    }
}

impl Mul<C64> for &LinOp {
    type Output = LinOp;
    fn mul(self, rhs: C64) -> LinOp {
        self.scaled(rhs)
    }
}

impl Mul<f64> for &LinOp {
    type Output = LinOp;
    fn mul(self, rhs: f64) -> LinOp {
        self.scaled(C64::new(rhs, 0.0))
    }
}

impl Neg for &LinOp {
    type Output = LinOp;
    fn neg(self) -> LinOp {
        self.scaled(C64::new(-1.0, 0.0))
    }
}

/// In place `m <- m + m^dagger` for a row-major square matrix.
pub fn add_adjoint_in_place(dim: usize, m: &mut [C64]) {
    for i in 0..dim {
        let ii = i * dim + i;
        m[ii] = C64::new(2.0 * m[ii].re, 0.0);
        for j in (i + 1)..dim {
            let a = m[i * dim + j];
            let b = m[j * dim + i];
            m[i * dim + j] = a + b.conj();
            m[j * dim + i] = b + a.conj();
        }
    }
}

/// Largest entry of `|m - m^dagger|` for a row-major square matrix.
pub fn dense_hermiticity_error(dim: usize, m: &[C64]) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..dim {
        for j in i..dim {
            worst = worst.max((m[i * dim + j] - m[j * dim + i].conj()).norm());
        }
    }
    worst
}

pub fn dense_trace(dim: usize, m: &[C64]) -> C64 {
    (0..dim).map(|i| m[i * dim + i]).sum()
}

pub fn to_dmatrix(dim: usize, m: &[C64]) -> DMatrix<C64> {
    DMatrix::from_row_slice(dim, dim, m)
}

pub fn from_dmatrix(m: &DMatrix<C64>) -> Vec<C64> {
    let d = m.nrows();
    let mut out = Vec::with_capacity(d * d);
    for r in 0..d {
        for c in 0..d {
            out.push(m[(r, c)]);
        }
    }
    out
}

/// Eigen-decomposition of a Hermitian row-major matrix. Eigenvalues come back
/// ascending, with eigenvectors as the matching columns.
pub fn hermitian_eigen(dim: usize, m: &[C64]) -> (Vec<f64>, DMatrix<C64>) {
    let mat = to_dmatrix(dim, m);
    // symmetrize away round-off before handing to the solver
    let herm = (&mat + mat.adjoint()) * C64::new(0.5, 0.0);
    let eig = nalgebra::SymmetricEigen::new(herm);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(dim, dim, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Certifies `m + shift * I` as positive definite by attempting a Cholesky
/// factorization. Success implies every eigenvalue of `m` exceeds `-shift`.
/// Cost is `dim^3 / 3` complex operations and one extra copy of `m`.
pub fn cholesky_certifies_psd(dim: usize, m: &[C64], shift: f64) -> bool {
    // lower triangle only, row-major
    let mut a = m.to_vec();
    for i in 0..dim {
        a[i * dim + i] += shift;
    }
    for j in 0..dim {
        let mut diag = a[j * dim + j].re;
        for k in 0..j {
            diag -= a[j * dim + k].norm_sqr();
        }
        if !(diag > 0.0) {
            return false;
        }
        let ljj = diag.sqrt();
        a[j * dim + j] = C64::new(ljj, 0.0);
        let (head, tail) = a.split_at_mut((j + 1) * dim);
        let row_j = &head[j * dim..j * dim + j];
        for i in (j + 1)..dim {
            let row_i = &mut tail[(i - j - 1) * dim..(i - j) * dim];
            let mut s = row_i[j];
            for k in 0..j {
                s -= row_i[k] * row_j[k].conj();
            }
            row_i[j] = s / ljj;
        }
    }
    true
}

/// Solves `a x = b` for a small dense system by LU with partial pivoting.
pub fn dense_solve(a: DMatrix<C64>, b: &[C64]) -> Result<Vec<C64>> {
    let n = a.nrows();
    let lu = a.lu();
    let rhs = nalgebra::DVector::from_column_slice(b);
    let x = lu.solve(&rhs).ok_or_else(|| Error::Singular(format!("{n}x{n} LU solve")))?;
    if x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::Singular(format!("{n}x{n} LU produced non-finite values")));
    }
    Ok(x.iter().copied().collect())
}

/// Complex matrix product through four real products, which reach the
/// blocked real kernel.
pub fn zgemm(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    let (ar, ai) = (a.map(|v| v.re), a.map(|v| v.im));
    let (br, bi) = (b.map(|v| v.re), b.map(|v| v.im));
    let re = &ar * &br - &ai * &bi;
    let im = &ar * &bi + &ai * &br;
    re.zip_map(&im, C64::new)
}

pub fn vdot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm_sqr(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

/// Outcome of an iterative solve.
#[derive(Debug, Clone, PartialEq)]
pub struct IterativeSolution {
    pub x: Vec<C64>,
    /// Final `||b - A x|| / ||b||`.
    pub relative_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Restarted GMRES(m) with right preconditioning for `A x = b`.
///
/// `precond(v, out)` writes `M^{-1} v`, where `M` approximates `A`.
pub fn gmres(
    apply: impl Fn(&[C64], &mut [C64]),
    precond: impl Fn(&[C64], &mut [C64]),
    b: &[C64],
    x0: Option<Vec<C64>>,
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> IterativeSolution {
    let n = b.len();
    let m = restart.max(1);
    let bnorm = norm_sqr(b).sqrt().max(f64::MIN_POSITIVE);
    let mut x = x0.unwrap_or_else(|| vec![ZERO; n]);
    let mut r = vec![ZERO; n];
    let mut w = vec![ZERO; n];
    let mut z = vec![ZERO; n];
    let mut iterations = 0;

    let residual = |x: &[C64], r: &mut [C64], w: &mut [C64]| {
        apply(x, w);
        for i in 0..n {
            r[i] = b[i] - w[i];
        }
        norm_sqr(r).sqrt()
    };

    while iterations < max_iter {
        let beta = residual(&x, &mut r, &mut w);
        let rel = beta / bnorm;
        if rel <= tol {
            return IterativeSolution { x, relative_residual: rel, iterations, converged: true };
        }
        let mut basis: Vec<Vec<C64>> = Vec::with_capacity(m + 1);
        basis.push(r.iter().map(|v| v / beta).collect());
        // Hessenberg columns after Givens rotation, plus the rotations
        let mut hcols: Vec<Vec<C64>> = Vec::with_capacity(m);
        let mut rot: Vec<(f64, C64)> = Vec::with_capacity(m);
        let mut g = vec![ZERO; m + 1];
        g[0] = C64::new(beta, 0.0);
        let mut k_used = 0;
        for k in 0..m {
            precond(&basis[k], &mut z);
            apply(&z, &mut w);
            let mut h = vec![ZERO; k + 2];
            for (j, v) in basis.iter().enumerate() {
                let c = vdot(v, &w);
                h[j] = c;
                for i in 0..n {
                    w[i] -= c * v[i];
                }
            }
            let hn = norm_sqr(&w).sqrt();
            h[k + 1] = C64::new(hn, 0.0);
            for (j, &(c, s)) in rot.iter().enumerate() {
                let (a, bb) = (h[j], h[j + 1]);
                h[j] = a * c + s * bb;
                h[j + 1] = -s.conj() * a + bb * c;
            }
            let (a, bb) = (h[k], h[k + 1]);
            let denom = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            let (c, s) = if denom == 0.0 {
                (1.0, ZERO)
            } else if a.norm() == 0.0 {
                (0.0, (bb / bb.norm()).conj())
            } else {
                let phase = a / a.norm();
                (a.norm() / denom, phase * bb.conj() / denom)
            };
            h[k] = C64::new(c, 0.0) * a + s * bb;
            h[k + 1] = ZERO;
            rot.push((c, s));
            g[k + 1] = -s.conj() * g[k];
            g[k] *= c;
            hcols.push(h);
            iterations += 1;
            k_used = k + 1;
            let rel = g[k + 1].norm() / bnorm;
            if rel <= tol || iterations >= max_iter || hn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / hn).collect());
        }
        // back substitution on the triangular system
        let mut yk = vec![ZERO; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in (i + 1)..k_used {
                s -= hcols[j][i] * yk[j];
            }
            yk[i] = s / hcols[i][i];
        }
        // x += M^{-1} (V y)
        w.iter_mut().for_each(|v| *v = ZERO);
        for (j, c) in yk.iter().enumerate() {
            for i in 0..n {
                w[i] += c * basis[j][i];
            }
        }
        precond(&w, &mut z);
        for i in 0..n {
            x[i] += z[i];
        }
    }
    let beta = residual(&x, &mut r, &mut w);
    let rel = beta / bnorm;
    IterativeSolution { x, relative_residual: rel, iterations, converged: rel <= tol }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn triplets_sum_duplicates_and_drop_zeros() {
        let op = LinOp::from_triplets(
            3,
            [(0, 1, c(1.0, 0.0)), (0, 1, c(2.0, 0.0)), (2, 2, c(1.0, 0.0)), (2, 2, c(-1.0, 0.0))],
        );
        assert_eq!(op.nnz(), 1);
        assert_eq!(op.get(0, 1), c(3.0, 0.0));
        assert_eq!(op.get(2, 2), ZERO);
    }

    #[test]
    fn sparse_product_matches_dense() {
        let a = LinOp::from_triplets(3, [(0, 1, c(1.0, 2.0)), (1, 2, c(0.5, 0.0)), (2, 0, c(0.0, -1.0))]);
        let b = LinOp::from_triplets(3, [(1, 1, c(2.0, 0.0)), (2, 0, c(1.0, 1.0)), (0, 2, c(3.0, 0.0))]);
        let sparse = a.matmul(&b).to_dense();
        let dense = a.to_dense() * b.to_dense();
        assert!((sparse - dense).camax() < 1e-15);
    }

    #[test]
    fn add_adjoint_produces_hermitian() {
        let mut m = vec![c(1.0, 2.0), c(0.0, 1.0), c(3.0, -1.0), c(4.0, 0.5)];
        add_adjoint_in_place(2, &mut m);
        assert!(dense_hermiticity_error(2, &m) < 1e-15);
        assert_eq!(m[1], c(0.0, 1.0) + c(3.0, 1.0));
    }

    #[test]
    fn cholesky_detects_negative_eigenvalue() {
        // eigenvalues 3 and -1
        let m = vec![c(1.0, 0.0), c(0.0, 2.0), c(0.0, -2.0), c(1.0, 0.0)];
        assert!(!cholesky_certifies_psd(2, &m, 1e-9));
        assert!(cholesky_certifies_psd(2, &m, 1.0 + 1e-9));
        let id = vec![c(1.0, 0.0), ZERO, ZERO, c(1.0, 0.0)];
        assert!(cholesky_certifies_psd(2, &id, 0.0));
    }

    #[test]
    fn gmres_solves_nonsymmetric_system() {
        let n = 40;
        let a = LinOp::from_triplets(
            n,
            (0..n).flat_map(|i| {
                let mut v = vec![(i, i, c(4.0 + i as f64 * 0.1, 1.0))];
                if i + 1 < n {
                    v.push((i, i + 1, c(-1.0, 0.5)));
                }
                if i > 0 {
                    v.push((i, i - 1, c(0.0, -2.0)));
                }
                v
            }),
        );
        let x_true: Vec<C64> = (0..n).map(|i| c((i as f64).sin(), (i as f64 * 0.3).cos())).collect();
        let b = a.apply_vec(&x_true);
        let inv: Vec<C64> = (0..n).map(|i| a.get(i, i).inv()).collect();
        let jacobi = |v: &[C64], out: &mut [C64]| {
            for ((o, x), d) in out.iter_mut().zip(v).zip(&inv) {
                *o = x * d;
            }
        };
        let sol = gmres(|x, y| a.apply(x, y), jacobi, &b, None, 1e-12, 8, 500);
        assert!(sol.converged);
        for (p, q) in sol.x.iter().zip(&x_true) {
            assert!((p - q).norm() < 1e-9);
        }
    }

    #[test]
    fn zgemm_matches_generic_product() {
        let a = DMatrix::from_fn(5, 4, |r, k| c(r as f64 - k as f64, (r * k) as f64 * 0.3));
        let b = DMatrix::from_fn(4, 3, |r, k| c((r + k) as f64 * 0.7, 1.0 - r as f64));
        assert!((zgemm(&a, &b) - &a * &b).camax() < 1e-12);
    }

    #[test]
    fn hermitian_eigen_sorted() {
        let m = vec![c(2.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(2.0, 0.0)];
        let (vals, _) = hermitian_eigen(2, &m);
        assert!((vals[0] - 1.0).abs() < 1e-12 && (vals[1] - 3.0).abs() < 1e-12);
    }
}
