//! Stationary states of the driven-dissipative array.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::liouvillian::{array_collapses, Collapse, Liouvillian};
use super::ode::{self, Tolerances};
use crate::error::{Error, Result};
use crate::fockspace::{build_space, mode_operator, Chirality, CompositeSpace, DensityOp, ModeId, OperatorKind, TruncationScheme};
use crate::linalg::{self, LinOp};
use crate::model::{driven_hamiltonian, ArrayParams};

/// Solver knobs. The defaults suit spaces up to a few thousand states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SteadyOptions {
    /// Target `||L(rho)||_F / ||rho||_F`.
    pub tol: f64,
    /// Vectorized sizes `d^2` up to this use dense LU.
    pub dense_limit: usize,
    /// Krylov basis length of restarted GMRES.
    pub restart: usize,
    pub max_iterations: usize,
    /// Bytes the Krylov basis may occupy before falling back to evolution.
    pub memory_limit: usize,
    /// Evolution time of the fallback, in units of the inverse smallest
    /// loss rate.
    pub fallback_time: f64,
    /// Largest Hilbert-space dimension for which GMRES is preconditioned by
    /// the exact inverse of the no-jump part (a Schur factorization of
    /// `H_eff`, cubic in the dimension); above it, Jacobi.
    pub schur_limit: usize,
}

impl Default for SteadyOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            dense_limit: 1024,
            restart: 60,
            max_iterations: 20_000,
            memory_limit: 2_000_000_000,
            fallback_time: 20.0,
            schur_limit: 2500,
        }
    }
}

/// How a steady state was obtained.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SteadyMethod {
    DenseLu,
    Gmres { iterations: usize },
    /// Long-time evolution, optionally polished by GMRES.
    Evolution { t: f64, polish_iterations: usize },
}

#[derive(Debug, Clone)]
pub struct SteadyStateResult {
    pub rho: DensityOp,
    /// `||L(rho)||_F`.
    pub residual: f64,
    pub method: SteadyMethod,
}

/// Pivot magnitude, relative to the largest, below which the bordered
/// generator counts as singular: the kernel of `L` has dimension above one.
const KERNEL_PIVOT_TOL: f64 = 1e-11;

/// Steady state of `L` built from `h` and `collapses` with default options.
pub fn steady_state(space: &Arc<CompositeSpace>, h: &LinOp, collapses: &[Collapse]) -> Result<SteadyStateResult> {
    steady_state_with(space, h, collapses, &SteadyOptions::default(), None)
}

/// Bordered operator: `L(x)` with the `(0, 0)` equation replaced by
/// `Tr x`.
fn bordered(l: &Liouvillian, d: usize, x: &[C64], out: &mut [C64]) {
    l.apply_general(x, out);
    out[0] = (0..d).map(|i| x[i * d + i]).sum();
}

fn residual(l: &Liouvillian, rho: &[C64]) -> f64 {
    let mut out = vec![C64::new(0.0, 0.0); rho.len()];
    l.apply_general(rho, &mut out);
    linalg::norm_sqr(&out).sqrt()
}

fn finish(space: &Arc<CompositeSpace>, l: &Liouvillian, mut x: Vec<C64>, method: SteadyMethod) -> Result<SteadyStateResult> {
    let d = space.dim();
    // symmetrize and renormalize away solver noise
    for i in 0..d {
        for j in i..d {
            let m = 0.5 * (x[i * d + j] + x[j * d + i].conj());
            x[i * d + j] = m;
            x[j * d + i] = m.conj();
        }
    }
    let tr = linalg::dense_trace(d, &x).re;
    if !(tr.abs() > 0.0) {
        return Err(Error::Singular("steady state has zero trace".into()));
    }
    x.iter_mut().for_each(|v| *v /= tr);
    let res = residual(l, &x);
    let rho = DensityOp::new(space.clone(), x)?;
    Ok(SteadyStateResult { rho, residual: res, method })
}

fn dense_solve(space: &Arc<CompositeSpace>, l: &Liouvillian) -> Result<SteadyStateResult> {
    let d = space.dim();
    let mut m = l.to_dense_superoperator();
    for i in 0..d * d {
        m[(0, i)] = C64::new(0.0, 0.0);
    }
    for i in 0..d {
        m[(0, i * d + i)] = C64::new(1.0, 0.0);
    }
    let lu = m.lu();
    let u = lu.u();
    let diag: Vec<f64> = (0..d * d).map(|i| u[(i, i)].norm()).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let small = diag.iter().filter(|&&v| v <= KERNEL_PIVOT_TOL * max).count();
    if small > 0 {
        return Err(Error::AmbiguousSteadyState(small + 1));
    }
    let mut b = nalgebra::DVector::zeros(d * d);
    b[0] = C64::new(1.0, 0.0);
    let x = lu.solve(&b).ok_or_else(|| Error::Singular("bordered Liouvillian".into()))?;
    finish(space, l, x.iter().copied().collect(), SteadyMethod::DenseLu)
}

/// Exact inverse of the no-jump generator `X -> -i H_eff X + i X H_eff^dag`.
///
/// With `H_eff = Q T Q^dag` (complex Schur form) the equation becomes the
/// triangular Sylvester problem `T Y - Y T^dag = i Q^dag B Q`, solved column
/// by column from the right. Every diagonal coefficient
/// `lambda_i - conj(lambda_j)` has imaginary part at most minus twice the
/// smallest loss, so the solve never divides by zero when all modes leak.
struct NoJumpInverse {
    d: usize,
    q: DMatrix<C64>,
    t: DMatrix<C64>,
}

impl NoJumpInverse {
    fn new(heff: &LinOp) -> Result<Self> {
        let d = heff.dim();
        let schur = nalgebra::Schur::try_new(heff.to_dense(), 1e-14, 100 * d.max(10))
            .ok_or_else(|| Error::NoConvergence("Schur decomposition of H_eff".into()))?;
        let (q, t) = schur.unpack();
        Ok(Self { d, q, t })
    }

    fn apply(&self, v: &[C64], out: &mut [C64]) {
        let d = self.d;
        let b = DMatrix::from_row_slice(d, d, v);
        let c = linalg::zgemm(&linalg::zgemm(&self.q.adjoint(), &b), &self.q) * C64::new(0.0, 1.0);
        let mut y = DMatrix::<C64>::zeros(d, d);
        let mut rhs = vec![C64::new(0.0, 0.0); d];
        for j in (0..d).rev() {
            // (T - conj(T_jj)) y_j = c_j + sum_{k>j} conj(T_jk) y_k
            for i in 0..d {
                rhs[i] = c[(i, j)];
            }
            for k in j + 1..d {
                let f = self.t[(j, k)].conj();
                if f != C64::new(0.0, 0.0) {
                    let col = y.column(k);
                    for i in 0..d {
                        rhs[i] += f * col[i];
                    }
                }
            }
            let shift = self.t[(j, j)].conj();
            for i in (0..d).rev() {
                let yi = rhs[i] / (self.t[(i, i)] - shift);
                y[(i, j)] = yi;
                let col = self.t.column(i);
                for k in 0..i {
                    rhs[k] -= col[k] * yi;
                }
            }
        }
        let x = linalg::zgemm(&linalg::zgemm(&self.q, &y), &self.q.adjoint());
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = x[(i, j)];
            }
        }
    }
}

fn gmres_solve(
    l: &Liouvillian,
    d: usize,
    x0: Option<Vec<C64>>,
    opts: &SteadyOptions,
    schur: Option<&NoJumpInverse>,
) -> linalg::IterativeSolution {
    let mut b = vec![C64::new(0.0, 0.0); d * d];
    b[0] = C64::new(1.0, 0.0);
    let tol = opts.tol * 1e-2;
    if let Some(p) = schur {
        return linalg::gmres(|x, y| bordered(l, d, x, y), |v, out| p.apply(v, out), &b, x0, tol, opts.restart, opts.max_iterations);
    }
    let mut inv_diag = vec![C64::new(0.0, 0.0); d * d];
    inv_diag.par_chunks_mut(d).enumerate().for_each(|(i, row)| {
        for (j, v) in row.iter_mut().enumerate() {
            let e = l.diagonal_entry(i, j);
            *v = if e.norm() > 1e-300 { 1.0 / e } else { C64::new(1.0, 0.0) };
        }
    });
    // the trace row has coefficient 1 on (0, 0)
    inv_diag[0] = C64::new(1.0, 0.0);
    let jacobi = |v: &[C64], out: &mut [C64]| {
        for ((o, x), p) in out.iter_mut().zip(v).zip(&inv_diag) {
            *o = x * p;
        }
    };
    linalg::gmres(|x, y| bordered(l, d, x, y), jacobi, &b, x0, tol, opts.restart, opts.max_iterations)
}

/// Steady state with explicit options. `guess` seeds the iterative solver.
pub fn steady_state_with(
    space: &Arc<CompositeSpace>,
    h: &LinOp,
    collapses: &[Collapse],
    opts: &SteadyOptions,
    guess: Option<&DensityOp>,
) -> Result<SteadyStateResult> {
    let d = space.dim();
    if h.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: h.dim() });
    }
    if !(opts.tol > 0.0) || opts.restart == 0 {
        return Err(Error::InvalidParameter("steady-state tolerance and restart must be positive".into()));
    }
    let l = Liouvillian::new(h.clone(), collapses.to_vec())?;
    if l.jumps().is_empty() {
        return Err(Error::InvalidParameter("steady state needs at least one loss channel".into()));
    }
    let n = d * d;
    if n <= opts.dense_limit {
        return dense_solve(space, &l);
    }
    let accept = |x: &[C64]| {
        let tr = linalg::dense_trace(d, x).re;
        tr.abs() > 0.0 && residual(&l, x) / (linalg::norm_sqr(x).sqrt()) <= opts.tol * tr.abs()
    };

    let krylov_bytes = (opts.restart + 4) * n * std::mem::size_of::<C64>();
    let schur = if d <= opts.schur_limit && krylov_bytes <= opts.memory_limit {
        match NoJumpInverse::new(&l.effective_hamiltonian()) {
            Ok(p) => Some(p),
            Err(e) => {
                log::warn!("{e}; preconditioning with the diagonal instead");
                None
            }
        }
    } else {
        None
    };
    if krylov_bytes <= opts.memory_limit {
        let x0 = guess.filter(|g| g.dim() == d).map(|g| g.as_slice().to_vec());
        let sol = gmres_solve(&l, d, x0, opts, schur.as_ref());
        if sol.converged && accept(&sol.x) {
            return finish(space, &l, sol.x, SteadyMethod::Gmres { iterations: sol.iterations });
        }
        log::warn!(
            "GMRES stalled at relative residual {:.2e} after {} iterations; evolving instead",
            sol.relative_residual,
            sol.iterations
        );
    } else {
        log::warn!("Krylov basis would need {krylov_bytes} bytes; evolving to the steady state instead");
    }

    // long-time evolution from the vacuum or the guess
    let min_rate = l.jumps().iter().map(|c| c.rate).fold(f64::INFINITY, f64::min);
    let t = opts.fallback_time / min_rate;
    let mut y = match guess.filter(|g| g.dim() == d) {
        Some(g) => g.as_slice().to_vec(),
        None => {
            let mut v = vec![C64::new(0.0, 0.0); n];
            v[0] = C64::new(1.0, 0.0);
            v
        }
    };
    let tol = Tolerances { rtol: 1e-10, atol: 1e-12 };
    let mut solver = ode::Dopri5::new(n, tol);
    solver.advance(&l, 0.0, t, &mut y)?;
    let mut polish = 0;
    if !accept(&y) && krylov_bytes <= opts.memory_limit {
        let sol = gmres_solve(&l, d, Some(y.clone()), opts, schur.as_ref());
        polish = sol.iterations;
        if sol.converged {
            y = sol.x;
        }
    }
    let out = finish(space, &l, y, SteadyMethod::Evolution { t, polish_iterations: polish })?;
    if out.residual > opts.tol * linalg::norm_sqr(out.rho.as_slice()).sqrt() * 1e3 {
        return Err(Error::NoConvergence(format!("steady state residual {:.2e} after evolution", out.residual)));
    }
    Ok(out)
}

/// One point of an excitation spectrum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcitationPoint {
    pub delta: f64,
    /// `<n_{1,dir}>` in the steady state; NaN when the solve failed.
    pub n: f64,
    /// `<n>` of the opposite edge mode.
    pub n_other: f64,
    pub residual: f64,
    pub error: Option<String>,
}

/// Steady-state photon number of the driven edge mode `a_{1,direction}` at
/// each detuning of `delta_grid`. Grid points are split into contiguous
/// blocks solved in parallel; within a block each solve starts from the
/// previous steady state.
pub fn excitation_spectrum(
    params: &ArrayParams,
    direction: Chirality,
    trunc: &TruncationScheme,
    delta_grid: &[f64],
    opts: &SteadyOptions,
) -> Result<Vec<ExcitationPoint>> {
    if let Some(d) = delta_grid.iter().find(|d| !d.is_finite()) {
        return Err(Error::InvalidParameter(format!("detuning {d} is not finite")));
    }
    let p = ArrayParams { direction, ..params.clone() };
    p.validate()?;
    let space = build_space(p.n_cavities, trunc)?;
    let collapses = array_collapses(&space, &p, true)?;
    let driven = mode_operator(&space, ModeId::new(1, direction), OperatorKind::Number)?;
    let other = mode_operator(&space, ModeId::new(1, direction.other()), OperatorKind::Number)?;

    let n_blocks = rayon::current_num_threads().clamp(1, delta_grid.len().max(1));
    let block = delta_grid.len().div_ceil(n_blocks).max(1);
    let solve_block = |deltas: &[f64]| -> Vec<ExcitationPoint> {
        let mut guess: Option<DensityOp> = None;
        deltas
            .iter()
            .map(|&delta| {
                let point = ArrayParams { delta, ..p.clone() };
                let res = driven_hamiltonian(&space, &point)
                    .and_then(|h| steady_state_with(&space, &h, &collapses, opts, guess.as_ref()));
                match res {
                    Ok(s) => {
                        let n = s.rho.expect(&driven).re;
                        let n_other = s.rho.expect(&other).re;
                        let residual = s.residual;
                        guess = Some(s.rho);
                        ExcitationPoint { delta, n, n_other, residual, error: None }
                    }
                    Err(e) => ExcitationPoint {
                        delta,
                        n: f64::NAN,
                        n_other: f64::NAN,
                        residual: f64::NAN,
                        error: Some(e.to_string()),
                    },
                }
            })
            .collect()
    };
    let blocks: Vec<Vec<ExcitationPoint>> = delta_grid.par_chunks(block).map(solve_block).collect();
    Ok(blocks.into_iter().flatten().collect())
}
