//! Linear response of the array to a weak probe on one edge mode.
//!
//! Without Kerr terms the mean fields obey `a' = -M a + u`, so the steady
//! amplitudes are `M^{-1} u` and the input field is transmitted with
//! amplitude `t = 1 - 2 gamma [M^{-1}]_{dd}` for drive mode `d`.
//!
//! For a semi-infinite chain the edge block of `M^{-1}` follows from the
//! Schur complement of the first cavity. The rest of the chain enters through
//! `x = [D^{-1}]_{11}`, the first diagonal entry of the inverse of the chain
//! seen from cavity 2, which satisfies the fixed point
//! `x = 1 / (z + t1^2 / (z + t2^2 x))` with `z = kappa + i delta_p`.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::dynamics::{array_collapses, steady_state_with, SteadyOptions};
use crate::error::{Error, Result};
use crate::fockspace::{build_space, mode_operator, Chirality, OperatorKind, TruncationScheme};
use crate::model::{driven_hamiltonian, ArrayParams};

/// Coefficient matrix of the linear quantum Langevin equations, in the
/// canonical mode order `(1,CW), (1,CCW), (2,CW), ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct QleMatrix {
    pub m: DMatrix<C64>,
    /// Drive vector: `sqrt(2 gamma) eps` on the driven mode.
    pub u: Vec<C64>,
    pub delta_p: f64,
    pub direction: Chirality,
}

fn require_linear(p: &ArrayParams) -> Result<()> {
    p.validate()?;
    if p.chi != 0.0 || p.chi_c != 0.0 {
        return Err(Error::InvalidParameter(
            "linear response needs chi = chi_c = 0; use the steady-state solver with Kerr terms".into(),
        ));
    }
    Ok(())
}

fn drive_index(direction: Chirality) -> usize {
    match direction {
        Chirality::Cw => 0,
        Chirality::Ccw => 1,
    }
}

/// `M` with `kappa + i delta_p` on the diagonal, `gamma` added on both modes
/// of cavity 1, `i t1` inside each cavity and `i t2` on each fiber link.
pub fn qle_matrix(p: &ArrayParams, delta_p: f64, direction: Chirality) -> Result<QleMatrix> {
    require_linear(p)?;
    if !delta_p.is_finite() {
        return Err(Error::InvalidParameter("probe detuning must be finite".into()));
    }
    let n = 2 * p.n_cavities;
    let mut m = DMatrix::from_diagonal_element(n, n, C64::new(p.kappa, delta_p));
    m[(0, 0)] += p.gamma_drive;
    m[(1, 1)] += p.gamma_drive;
    for j in 0..p.n_cavities {
        m[(2 * j, 2 * j + 1)] = C64::new(0.0, p.t1);
        m[(2 * j + 1, 2 * j)] = C64::new(0.0, p.t1);
    }
    for j in 0..p.n_cavities - 1 {
        m[(2 * j + 1, 2 * j + 2)] = C64::new(0.0, p.t2);
        m[(2 * j + 2, 2 * j + 1)] = C64::new(0.0, p.t2);
    }
    let mut u = vec![C64::new(0.0, 0.0); n];
    u[drive_index(direction)] = C64::new((2.0 * p.gamma_drive).sqrt() * p.eps, 0.0);
    Ok(QleMatrix { m, u, delta_p, direction })
}

impl QleMatrix {
    /// Solves `M x = b`.
    fn solve(&self, b: &[C64]) -> Result<Vec<C64>> {
        crate::linalg::dense_solve(self.m.clone(), b)
            .map_err(|_| Error::Singular(format!("QLE matrix at delta_p = {}", self.delta_p)))
    }

    /// Steady amplitudes `M^{-1} u`.
    pub fn steady_amplitudes(&self) -> Result<Vec<C64>> {
        self.solve(&self.u)
    }

    /// `[M^{-1}]_{dd}` for the driven mode `d`.
    pub fn edge_response(&self) -> Result<C64> {
        let d = drive_index(self.direction);
        let mut e = vec![C64::new(0.0, 0.0); self.u.len()];
        e[d] = C64::new(1.0, 0.0);
        Ok(self.solve(&e)?[d])
    }
}

/// Steady amplitudes `M^{-1} u` of every mode.
pub fn numeric_amplitudes(p: &ArrayParams, delta_p: f64, direction: Chirality) -> Result<Vec<C64>> {
    qle_matrix(p, delta_p, direction)?.steady_amplitudes()
}

/// `T = |1 - 2 gamma [M^{-1}]_{dd}|^2`, which equals
/// `|1 - (sqrt(2 gamma) / eps) a_d|^2` for any nonzero `eps`.
pub fn numeric_transmission(p: &ArrayParams, delta_p: f64, direction: Chirality) -> Result<f64> {
    let q = qle_matrix(p, delta_p, direction)?;
    Ok((1.0 - 2.0 * p.gamma_drive * q.edge_response()?).norm_sqr())
}

/// Root of the semi-infinite chain's self-consistency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GreenRoot {
    pub value: C64,
    /// Both or neither quadratic root looked passive; `value` is then the
    /// one with the larger real part.
    pub ambiguous: bool,
}

/// `x = [D^{-1}]_{11}` of the semi-infinite chain: the root of
/// `t2^2 z x^2 + (z^2 + t1^2 - t2^2) x - z = 0` with positive real part,
/// the only one a passive chain can produce.
pub fn analytic_green(p: &ArrayParams, delta_p: f64) -> Result<GreenRoot> {
    require_linear(p)?;
    let z = C64::new(p.kappa, delta_p);
    if z.norm() == 0.0 {
        return Err(Error::Singular("analytic Green's function needs kappa or delta_p nonzero".into()));
    }
    let t1s = p.t1 * p.t1;
    let t2s = p.t2 * p.t2;
    if t2s == 0.0 {
        return Ok(GreenRoot { value: 1.0 / (z + t1s / z), ambiguous: false });
    }
    let a = t2s * z;
    let b = z * z + t1s - t2s;
    let disc = (b * b + 4.0 * a * z).sqrt();
    let roots = [(-b + disc) / (2.0 * a), (-b - disc) / (2.0 * a)];
    let passive: Vec<&C64> = roots.iter().filter(|r| r.re > 0.0).collect();
    let ambiguous = passive.len() != 1 || (roots[0] - roots[1]).norm() < 1e-9 * roots[0].norm().max(1e-300);
    let value = if roots[0].re >= roots[1].re { roots[0] } else { roots[1] };
    if ambiguous {
        log::warn!("Green's function branch is ambiguous at delta_p = {delta_p}");
    }
    Ok(GreenRoot { value, ambiguous })
}

/// Edge block of `M^{-1}` from the Schur complement with the chain's `x`:
/// returns `([M^{-1}]_{11}, [M^{-1}]_{22})`.
pub fn schur_edge_response(p: &ArrayParams, delta_p: f64, x: C64) -> (C64, C64) {
    let w = C64::new(p.gamma_drive + p.kappa, delta_p);
    let inner = w + p.t2 * p.t2 * x;
    let det = p.t1 * p.t1 + w * inner;
    (inner / det, w / det)
}

/// Closed-form transmission amplitudes `(t_cw, t_ccw)` of the semi-infinite
/// array for `gamma = kappa`, written with
/// `A = sqrt((t1^2 - (delta_p - t2 - i kappa)^2)(t1^2 - (delta_p + t2 - i kappa)^2))`.
/// The square root takes the sign fixed by the passive Green's function,
/// `A = 2 z t2^2 x - (t2^2 - t1^2 - z^2)`.
pub fn analytic_amplitudes(p: &ArrayParams, delta_p: f64) -> Result<(C64, C64, GreenRoot)> {
    require_linear(p)?;
    if (p.gamma_drive - p.kappa).abs() > 1e-12 * p.kappa.max(1e-300) {
        return Err(Error::InvalidParameter(format!(
            "closed-form transmission assumes gamma = kappa (got gamma = {}, kappa = {})",
            p.gamma_drive, p.kappa
        )));
    }
    let g = analytic_green(p, delta_p)?;
    let i = C64::new(0.0, 1.0);
    let k = p.kappa;
    let dp = C64::new(delta_p, 0.0);
    let z = C64::new(k, delta_p);
    let (t1s, t2s) = (p.t1 * p.t1, p.t2 * p.t2);
    let a = 2.0 * z * t2s * g.value - (t2s - t1s - z * z);
    let s_cw = t2s - (dp - i * k) * (dp - 3.0 * i * k) + a;
    let s_ccw = t2s - (dp - i * k) * (dp + i * k) + a;
    let den = dp * t1s + (dp - 2.0 * i * k) * s_cw;
    let t_cw = ((dp - 2.0 * i * k) * t1s + dp * s_cw) / den;
    let t_ccw = (dp * t1s + (dp - 2.0 * i * k) * s_ccw) / den;
    Ok((t_cw, t_ccw, g))
}

/// `|t|^2` from the closed forms for the given drive direction.
pub fn analytic_transmission(p: &ArrayParams, delta_p: f64, direction: Chirality) -> Result<f64> {
    let (t_cw, t_ccw, _) = analytic_amplitudes(p, delta_p)?;
    Ok(match direction {
        Chirality::Cw => t_cw.norm_sqr(),
        Chirality::Ccw => t_ccw.norm_sqr(),
    })
}

/// Transmission amplitude `1 - sqrt(2 gamma) <a_{1,dir}> / eps` with the Kerr
/// terms kept, from the steady state of the driven master equation at
/// `delta = delta_p` under `trunc`. Reduces to the QLE result when
/// `chi = chi_c = 0` and the cutoffs hold the coherent response.
pub fn kerr_amplitude(
    p: &ArrayParams,
    delta_p: f64,
    direction: Chirality,
    trunc: &TruncationScheme,
    opts: &SteadyOptions,
) -> Result<C64> {
    if !(p.eps != 0.0) {
        return Err(Error::InvalidParameter("transmission through the Kerr array needs eps != 0".into()));
    }
    let q = ArrayParams { delta: delta_p, direction, ..p.clone() };
    q.validate()?;
    let space = build_space(q.n_cavities, trunc)?;
    let h = driven_hamiltonian(&space, &q)?;
    let collapses = array_collapses(&space, &q, true)?;
    let ss = steady_state_with(&space, &h, &collapses, opts, None)?;
    let a = mode_operator(&space, q.driven_mode(), OperatorKind::Annihilate)?;
    let mean = a.trace_with(ss.rho.as_slice());
    Ok(1.0 - (2.0 * q.gamma_drive).sqrt() * mean / q.eps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TransmissionSource {
    Numeric,
    Analytic,
}

/// Transmission of both drive directions over a probe-detuning grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransmissionCurve {
    pub delta_p: Vec<f64>,
    pub t_cw: Vec<f64>,
    pub t_ccw: Vec<f64>,
    pub source: TransmissionSource,
}

pub fn transmission_curve(p: &ArrayParams, grid: &[f64], source: TransmissionSource) -> Result<TransmissionCurve> {
    let f = |d: f64, dir: Chirality| match source {
        TransmissionSource::Numeric => numeric_transmission(p, d, dir),
        TransmissionSource::Analytic => analytic_transmission(p, d, dir),
    };
    let t_cw = grid.iter().map(|&d| f(d, Chirality::Cw)).collect::<Result<Vec<_>>>()?;
    let t_ccw = grid.iter().map(|&d| f(d, Chirality::Ccw)).collect::<Result<Vec<_>>>()?;
    Ok(TransmissionCurve { delta_p: grid.to_vec(), t_cw, t_ccw, source })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(n: usize, t1: f64, t2: f64) -> ArrayParams {
        ArrayParams { eps: 0.08, ..ArrayParams::new(n, t1, t2) }
    }

    #[test]
    fn single_cavity_pattern() {
        let q = qle_matrix(&chain(1, 0.7, 3.0), 0.2, Chirality::Cw).unwrap();
        assert_eq!(q.m.nrows(), 2);
        assert_eq!(q.m[(0, 1)], C64::new(0.0, 0.7));
        assert_eq!(q.m[(0, 0)], C64::new(2.0, 0.2));
    }

    #[test]
    fn critically_coupled_mode_absorbs() {
        let p = chain(1, 0.0, 0.0);
        assert!(numeric_transmission(&p, 0.0, Chirality::Cw).unwrap() < 1e-24);
        assert!((numeric_transmission(&p, 1e6, Chirality::Cw).unwrap() - 1.0).abs() < 1e-5);
    }

    #[test]
    fn green_limits_and_fixed_point() {
        let z = C64::new(1.0, 0.4);
        let g = analytic_green(&chain(2, 0.0, 3.0), 0.4).unwrap();
        assert!((g.value - 1.0 / z).norm() < 1e-12 && !g.ambiguous);
        let g = analytic_green(&chain(2, 1.3, 0.0), 0.4).unwrap();
        assert!((g.value - 1.0 / (z + 1.69 / z)).norm() < 1e-12);
        for (t1, t2, dp) in [(0.8, 8.0, 0.0), (8.0, 4.0, 3.0), (1.0, 1.2, -2.5), (0.3, 20.0, 19.0)] {
            let p = chain(2, t1, t2);
            let z = C64::new(1.0, dp);
            let x = analytic_green(&p, dp).unwrap().value;
            let fp = 1.0 / (z + t1 * t1 / (z + t2 * t2 * x));
            assert!((x - fp).norm() < 1e-12, "{t1} {t2} {dp}");
        }
    }

    #[test]
    fn closed_forms_match_schur_complement() {
        for (t1, t2, dp) in [(0.8, 8.0, 0.5), (8.0, 4.0, 3.0), (1.0, 1.2, 10.0), (2.0, 5.0, -3.0)] {
            let p = chain(3, t1, t2);
            let (t_cw, t_ccw, g) = analytic_amplitudes(&p, dp).unwrap();
            let (m11, m22) = schur_edge_response(&p, dp, g.value);
            assert!((t_cw - (1.0 - 2.0 * m11)).norm() < 1e-10, "{t1} {t2} {dp}");
            assert!((t_ccw - (1.0 - 2.0 * m22)).norm() < 1e-10, "{t1} {t2} {dp}");
        }
    }

    #[test]
    fn master_equation_reproduces_linear_response() {
        // weak drive keeps the truncation error of the cutoff-3 space small
        let p = ArrayParams { eps: 0.01, ..chain(2, 1.0, 2.5) };
        let trunc = TruncationScheme::uniform(2, 3);
        for (dp, dir) in [(0.0, Chirality::Cw), (1.7, Chirality::Ccw), (-2.2, Chirality::Cw)] {
            let t = kerr_amplitude(&p, dp, dir, &trunc, &SteadyOptions::default()).unwrap();
            let q = qle_matrix(&p, dp, dir).unwrap();
            let lin = 1.0 - 2.0 * p.gamma_drive * q.edge_response().unwrap();
            assert!((t - lin).norm() < 1e-6, "{dp} {dir}: {t} vs {lin}");
        }
    }

    #[test]
    fn kerr_is_rejected() {
        let p = ArrayParams { chi: 1.0, ..chain(2, 1.0, 2.0) };
        assert!(qle_matrix(&p, 0.0, Chirality::Cw).is_err());
        let p = ArrayParams { gamma_drive: 2.0, ..chain(2, 1.0, 2.0) };
        assert!(analytic_transmission(&p, 0.0, Chirality::Cw).is_err());
    }
}
