//! Adaptive Dormand–Prince 5(4) integration of complex linear ODEs.

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Error-control tolerances for the adaptive integrator.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { rtol: 1e-8, atol: 1e-10 }
    }
}

/// Smallest relative tolerance accepted: a few hundred ulps.
pub const MIN_RTOL: f64 = 1e-13;

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(Error::InvalidParameter("integrator tolerances must be positive".into()));
        }
        // below round-off the error estimate underflows to zero and steps of
        // ~eps t are accepted forever
        if self.rtol < MIN_RTOL {
            return Err(Error::InvalidParameter(format!("rtol {:e} is below the attainable {MIN_RTOL:e}", self.rtol)));
        }
        Ok(())
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// fifth-order minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Vectors shorter than this are combined serially.
const PAR_MIN: usize = 1 << 14;

/// Right-hand side `dy = f(t, y)`.
pub trait Rhs {
    fn eval(&self, t: f64, y: &[C64], dy: &mut [C64]);
}

impl<F: Fn(f64, &[C64], &mut [C64])> Rhs for F {
    fn eval(&self, t: f64, y: &[C64], dy: &mut [C64]) {
        self(t, y, dy)
    }
}

/// Work buffers and step-size state of one integration.
pub struct Dopri5 {
    tol: Tolerances,
    k: [Vec<C64>; 7],
    ytmp: Vec<C64>,
    ynew: Vec<C64>,
    /// `k[0]` holds `f(t, y)` for the current point.
    fsal: bool,
    h: f64,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
    pub rhs_evals: usize,
}

fn combine(out: &mut [C64], y: &[C64], h: f64, terms: &[(f64, &[C64])]) {
    let body = |(i, o): (usize, &mut C64)| {
        let mut s = C64::new(0.0, 0.0);
        for (c, k) in terms {
            s += k[i] * *c;
        }
        *o = y[i] + s * h;
    };
    if out.len() >= PAR_MIN {
        out.par_iter_mut().enumerate().for_each(body);
    } else {
        out.iter_mut().enumerate().for_each(body);
    }
}

impl Dopri5 {
    pub fn new(dim: usize, tol: Tolerances) -> Self {
        let z = || vec![C64::new(0.0, 0.0); dim];
        Self {
            tol,
            k: [z(), z(), z(), z(), z(), z(), z()],
            ytmp: z(),
            ynew: z(),
            fsal: false,
            h: 0.0,
            steps_accepted: 0,
            steps_rejected: 0,
            rhs_evals: 0,
        }
    }

    /// Forget the cached derivative, e.g. after `y` was modified externally.
    pub fn invalidate(&mut self) {
        self.fsal = false;
    }

    fn ensure_k1<R: Rhs>(&mut self, f: &R, t: f64, y: &[C64]) {
        if !self.fsal {
            f.eval(t, y, &mut self.k[0]);
            self.rhs_evals += 1;
            self.fsal = true;
        }
    }

    /// Hairer's starting step heuristic.
    fn initial_step<R: Rhs>(&mut self, f: &R, t: f64, y: &[C64], span: f64) -> f64 {
        self.ensure_k1(f, t, y);
        let sc: Vec<f64> = y.iter().map(|v| self.tol.atol + self.tol.rtol * v.norm()).collect();
        let rms = |v: &[C64]| {
            (v.iter().zip(&sc).map(|(x, s)| (x.norm() / s).powi(2)).sum::<f64>() / v.len().max(1) as f64).sqrt()
        };
        let d0 = rms(y);
        let d1 = rms(&self.k[0]);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h0 = h0.min(span);
        for (i, o) in self.ytmp.iter_mut().enumerate() {
            *o = y[i] + self.k[0][i] * h0;
        }
        f.eval(t + h0, &self.ytmp, &mut self.k[1]);
        self.rhs_evals += 1;
        let diff: Vec<C64> = self.k[1].iter().zip(&self.k[0]).map(|(a, b)| a - b).collect();
        let d2 = rms(&diff) / h0;
        let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
        (100.0 * h0).min(h1).min(span)
    }

    /// One trial step of size `h` from `(t, y)`; the candidate lands in
    /// `self.ynew`. Returns the scaled error norm (accept when <= 1).
    pub fn trial_step<R: Rhs>(&mut self, f: &R, t: f64, y: &[C64], h: f64) -> f64 {
        self.ensure_k1(f, t, y);
        let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
        combine(&mut self.ytmp, y, h, &[(A21, &k1[..])]);
        f.eval(t + C2 * h, &self.ytmp, k2);
        combine(&mut self.ytmp, y, h, &[(A31, &k1[..]), (A32, &k2[..])]);
        f.eval(t + C3 * h, &self.ytmp, k3);
        combine(&mut self.ytmp, y, h, &[(A41, &k1[..]), (A42, &k2[..]), (A43, &k3[..])]);
        f.eval(t + C4 * h, &self.ytmp, k4);
        combine(&mut self.ytmp, y, h, &[(A51, &k1[..]), (A52, &k2[..]), (A53, &k3[..]), (A54, &k4[..])]);
        f.eval(t + C5 * h, &self.ytmp, k5);
        combine(&mut self.ytmp, y, h, &[(A61, &k1[..]), (A62, &k2[..]), (A63, &k3[..]), (A64, &k4[..]), (A65, &k5[..])]);
        f.eval(t + h, &self.ytmp, k6);
        combine(&mut self.ynew, y, h, &[(B1, &k1[..]), (B3, &k3[..]), (B4, &k4[..]), (B5, &k5[..]), (B6, &k6[..])]);
        f.eval(t + h, &self.ynew, k7);
        self.rhs_evals += 6;

        let (rtol, atol) = (self.tol.rtol, self.tol.atol);
        let ynew = &self.ynew;
        let term = |i: usize| {
            let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * h;
            let sc = atol + rtol * y[i].norm().max(ynew[i].norm());
            (e.norm() / sc).powi(2)
        };
        let n = y.len();
        let sum: f64 = if n >= PAR_MIN { (0..n).into_par_iter().map(term).sum() } else { (0..n).map(term).sum() };
        (sum / n.max(1) as f64).sqrt()
    }

    /// Adopt the last trial step: `y <- ynew`, `k1 <- k7`.
    pub fn accept(&mut self, y: &mut [C64]) {
        y.copy_from_slice(&self.ynew);
        self.k.swap(0, 6);
        self.fsal = true;
        self.steps_accepted += 1;
    }

    /// Candidate state of the last trial step.
    pub fn candidate(&self) -> &[C64] {
        &self.ynew
    }

    fn next_h(h: f64, err: f64) -> f64 {
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h * factor
    }

    /// Advance `y` from `t` to `t_end` with adaptive steps.
    pub fn advance<R: Rhs>(&mut self, f: &R, t: f64, t_end: f64, y: &mut [C64]) -> Result<()> {
        let mut t = t;
        if self.h <= 0.0 {
            self.h = self.initial_step(f, t, y, t_end - t);
        }
        while t < t_end {
            let remaining = t_end - t;
            let last = self.h >= remaining;
            let h = if last { remaining } else { self.h };
            let err = self.trial_step(f, t, y, h);
            if err.is_finite() && err <= 1.0 {
                self.accept(y);
                t = if last { t_end } else { t + h };
                // keep the adaptive step when the last one was only clipped
                if !last || h >= self.h {
                    self.h = Self::next_h(h, err);
                }
            } else {
                self.steps_rejected += 1;
                self.h = if err.is_finite() { Self::next_h(h, err).min(h) } else { 0.1 * h };
                if self.h < 1e-14 * t.abs().max(1.0) || !self.h.is_finite() {
                    return Err(Error::StepSizeCollapse { time: t, step: self.h });
                }
            }
        }
        Ok(())
    }

    pub fn step_size(&self) -> f64 {
        self.h
    }

    /// Step size to try next from `(t, y)`, estimating one if none is known.
    pub fn proposed_step<R: Rhs>(&mut self, f: &R, t: f64, y: &[C64], span: f64) -> f64 {
        if self.h <= 0.0 {
            self.h = self.initial_step(f, t, y, span);
        }
        self.h
    }

    /// Feed back the outcome of a trial step of size `h` with error `err`.
    pub fn adapt(&mut self, h: f64, err: f64, clipped: bool, t: f64) -> Result<()> {
        if err.is_finite() && err <= 1.0 {
            if !clipped || h >= self.h {
                self.h = Self::next_h(h, err);
            }
            Ok(())
        } else {
            self.steps_rejected += 1;
            self.h = if err.is_finite() { Self::next_h(h, err).min(h) } else { 0.1 * h };
            if self.h < 1e-14 * t.abs().max(1.0) || !self.h.is_finite() {
                return Err(Error::StepSizeCollapse { time: t, step: self.h });
            }
            Ok(())
        }
    }
}

/// Integrates `y' = f(t, y)` from `times[0]`, calling `record` at every entry
/// of `times` (which must be increasing).
pub fn integrate<R: Rhs>(
    f: &R,
    y0: Vec<C64>,
    times: &[f64],
    tol: Tolerances,
    mut record: impl FnMut(usize, f64, &[C64]) -> Result<()>,
) -> Result<Vec<C64>> {
    tol.validate()?;
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("recording times must be strictly increasing".into()));
    }
    let mut y = y0;
    let mut solver = Dopri5::new(y.len(), tol);
    let Some(&t0) = times.first() else { return Ok(y) };
    record(0, t0, &y)?;
    for (i, w) in times.windows(2).enumerate() {
        solver.advance(f, w[0], w[1], &mut y)?;
        record(i + 1, w[1], &y)?;
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_and_rotation() {
        let lam = C64::new(-0.3, 2.0);
        let f = move |_t: f64, y: &[C64], dy: &mut [C64]| {
            dy[0] = lam * y[0];
        };
        let times: Vec<f64> = (0..=10).map(|i| i as f64 * 0.5).collect();
        let mut worst = 0.0f64;
        integrate(&f, vec![C64::new(1.0, 0.0)], &times, Tolerances::default(), |_, t, y| {
            worst = worst.max((y[0] - (lam * t).exp()).norm());
            Ok(())
        })
        .unwrap();
        assert!(worst < 1e-8, "error {worst}");
    }

    #[test]
    fn fifth_order_convergence() {
        // fixed steps: halving h should cut the error by ~32
        let f = |t: f64, y: &[C64], dy: &mut [C64]| dy[0] = y[0] * C64::new(0.0, t.cos());
        let exact = C64::new(0.0, 1f64.sin()).exp();
        let run = |n: usize| {
            let mut s = Dopri5::new(1, Tolerances::default());
            let mut y = vec![C64::new(1.0, 0.0)];
            let h = 1.0 / n as f64;
            for i in 0..n {
                s.trial_step(&f, i as f64 * h, &y.clone(), h);
                s.accept(&mut y);
            }
            (y[0] - exact).norm()
        };
        let ratio = run(10) / run(20);
        assert!(ratio > 25.0 && ratio < 40.0, "ratio {ratio}");
    }

    #[test]
    fn rejects_bad_times() {
        let f = |_t: f64, _y: &[C64], _dy: &mut [C64]| {};
        assert!(integrate(&f, vec![C64::new(1.0, 0.0)], &[0.0, 0.0], Tolerances::default(), |_, _, _| Ok(())).is_err());
    }

    #[test]
    fn blow_up_reports_collapse() {
        // y' = y^3 escapes to infinity at t = 0.5
        let f = |_t: f64, y: &[C64], dy: &mut [C64]| dy[0] = y[0] * y[0] * y[0];
        let err = integrate(&f, vec![C64::new(1.0, 0.0)], &[0.0, 1.0], Tolerances::default(), |_, _, _| Ok(()));
        match err {
            Err(Error::StepSizeCollapse { time, .. }) => assert!((time - 0.5).abs() < 1e-3),
            other => panic!("expected collapse, got {other:?}"),
        }
    }
}
