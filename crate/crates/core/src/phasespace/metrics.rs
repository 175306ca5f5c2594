use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::Serialize;

use super::wigner::{wigner, PhaseGrid, WignerGrid};
use crate::error::{Error, Result};
use crate::fockspace::DensityOp;
use crate::linalg;

/// Fraction of `Tr rho` the grid must capture before metrics are trusted.
pub const COVERAGE_MIN: f64 = 0.999;

/// Relative stencil-error estimate above which macroscopicity is flagged.
pub const STENCIL_WARN: f64 = 0.01;

/// Wigner negativity `delta = integral(|W| - W)`, twice the negative volume.
pub fn negativity(w: &WignerGrid) -> f64 {
    let f: Vec<f64> = w.values.iter().map(|v| v.abs() - v).collect();
    w.grid.integrate(&f).max(0.0)
}

/// `integral(W) / trace`; below [`COVERAGE_MIN`] the grid clips the state.
pub fn coverage(w: &WignerGrid, trace: f64) -> f64 {
    w.integral() / trace
}

fn warn_coverage(w: &WignerGrid, trace: f64) {
    let c = coverage(w, trace);
    if !(c > COVERAGE_MIN && c < 2.0 - COVERAGE_MIN) {
        log::warn!("phase grid captures {c:.5} of the state's trace; enlarge the grid");
    }
}

/// `delta` of `rho` on `grid`, warning when the grid misses part of the state.
pub fn negativity_of(rho: &DensityOp, grid: &PhaseGrid) -> Result<f64> {
    let w = wigner(rho, grid)?;
    warn_coverage(&w, rho.trace());
    Ok(negativity(&w))
}

/// Macroscopicity with a Richardson estimate of its stencil error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Macroscopicity {
    pub value: f64,
    pub error_estimate: f64,
}

/// Second derivative along one axis: central inside, second-order
/// one-sided at the two ends.
fn second_difference(f: impl Fn(usize) -> f64, k: usize, n: usize, h: f64) -> f64 {
    let v = if k == 0 {
        2.0 * f(0) - 5.0 * f(1) + 4.0 * f(2) - f(3)
    } else if k + 1 == n {
        2.0 * f(n - 1) - 5.0 * f(n - 2) + 4.0 * f(n - 3) - f(n - 4)
    } else {
        f(k - 1) - 2.0 * f(k) + f(k + 1)
    };
    v / (h * h)
}

/// `(pi/2) integral W (-(1/4) laplacian - 1) W` on a grid with stride `s`.
fn macroscopicity_on(w: &WignerGrid, s: usize) -> f64 {
    let g = &w.grid;
    let nx = (g.nx - 1) / s + 1;
    let np = (g.np - 1) / s + 1;
    let (hx, hp) = (g.dx() * s as f64, g.dp() * s as f64);
    let at = |i: usize, j: usize| w.values[(i * s) * g.np + j * s];
    let mut integrand = vec![0.0; nx * np];
    for i in 0..nx {
        for j in 0..np {
            let lap = second_difference(|k| at(k, j), i, nx, hx) + second_difference(|k| at(i, k), j, np, hp);
            let v = at(i, j);
            integrand[i * np + j] = v * (-0.25 * lap - v);
        }
    }
    let coarse = PhaseGrid { x_max: g.x_min + (nx - 1) as f64 * hx, p_max: g.p_min + (np - 1) as f64 * hp, nx, np, ..g.clone() };
    0.5 * PI * coarse.integrate(&integrand)
}

/// Macroscopicity `I = (pi/2) integral W(alpha) (-d^2/(d alpha d alpha^*) - 1)
/// W(alpha) d^2 alpha`, with `d^2/(d alpha d alpha^*) = (1/4)(d_x^2 + d_p^2)`.
///
/// For a pure state this equals `<a^dag a> - |<a>|^2`. The error estimate
/// compares the full grid against every second point.
pub fn macroscopicity(w: &WignerGrid) -> Macroscopicity {
    let fine = macroscopicity_on(w, 1);
    let g = &w.grid;
    let error_estimate = if (g.nx - 1) % 2 == 0 && (g.np - 1) % 2 == 0 && g.nx >= 9 && g.np >= 9 {
        // second-order scheme: the error shrinks fourfold per halving
        (fine - macroscopicity_on(w, 2)).abs() / 3.0
    } else {
        f64::NAN
    };
    if error_estimate > STENCIL_WARN * fine.abs() {
        log::warn!("macroscopicity {fine:.4} carries a stencil error near {error_estimate:.2e}; refine the grid");
    }
    Macroscopicity { value: fine, error_estimate }
}

pub fn macroscopicity_of(rho: &DensityOp, grid: &PhaseGrid) -> Result<Macroscopicity> {
    let w = wigner(rho, grid)?;
    warn_coverage(&w, rho.trace());
    Ok(macroscopicity(&w))
}

/// Eigenvalues allowed below zero before an input counts as non-positive.
const PSD_TOL: f64 = 1e-7;

fn sqrt_psd(dim: usize, m: &[C64], what: &str) -> Result<Vec<C64>> {
    let (vals, vecs) = linalg::hermitian_eigen(dim, m);
    if let Some(&lo) = vals.first() {
        if lo < -PSD_TOL {
            return Err(Error::NotPositive(format!("{what} has eigenvalue {lo:e}")));
        }
    }
    let mut out = vec![C64::new(0.0, 0.0); dim * dim];
    for (k, &l) in vals.iter().enumerate() {
        let s = l.max(0.0).sqrt();
        if s == 0.0 {
            continue;
        }
        for i in 0..dim {
            let vi = vecs[(i, k)] * s;
            for j in 0..dim {
                out[i * dim + j] += vi * vecs[(j, k)].conj();
            }
        }
    }
    Ok(out)
}

/// Uhlmann fidelity `Tr sqrt(sqrt(rho) sigma sqrt(rho))`.
pub fn fidelity(rho: &DensityOp, sigma: &DensityOp) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch { expected: rho.dim(), found: sigma.dim() });
    }
    let d = rho.dim();
    let sr = linalg::to_dmatrix(d, &sqrt_psd(d, rho.as_slice(), "rho")?);
    // sigma is only checked; its square root is not needed
    sqrt_psd(d, sigma.as_slice(), "sigma")?;
    let s = linalg::to_dmatrix(d, sigma.as_slice());
    let m = &sr * s * &sr;
    let (vals, _) = linalg::hermitian_eigen(d, &linalg::from_dmatrix(&m));
    Ok(vals.iter().map(|v| v.max(0.0).sqrt()).sum::<f64>().min(1.0))
}

/// Fidelity against the pure state `psi`: `sqrt(<psi|rho|psi>)`. `psi` may
/// be longer than `rho`'s dimension; the tail outside `rho`'s support adds
/// nothing, and no renormalization is applied.
pub fn fidelity_pure(rho: &DensityOp, psi: &[C64]) -> Result<f64> {
    let d = rho.dim();
    if psi.len() < d {
        return Err(Error::DimensionMismatch { expected: d, found: psi.len() });
    }
    Ok(rho.overlap_with(&psi[..d]).max(0.0).sqrt())
}

/// `R_k = |n_cw - n_ccw| / (n_cw + n_ccw)` and `R_F = |F_cw - F_ccw|`.
pub fn nonreciprocal_rates(n_cw: f64, n_ccw: f64, f_cw: f64, f_ccw: f64) -> Result<(f64, f64)> {
    let total = n_cw + n_ccw;
    if !(total > 0.0) {
        return Err(Error::ZeroDenominator(format!("n_cw + n_ccw = {total}")));
    }
    Ok(((n_cw - n_ccw).abs() / total, (f_cw - f_ccw).abs()))
}
