use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fockspace::DensityOp;

/// Rectangular sampling of the phase plane, `alpha = x + i p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub nx: usize,
    pub np: usize,
}

impl Default for PhaseGrid {
    fn default() -> Self {
        Self::square(5.0, 201)
    }
}

impl PhaseGrid {
    pub const MIN_POINTS: usize = 16;

    pub fn new(x_min: f64, x_max: f64, p_min: f64, p_max: f64, nx: usize, np: usize) -> Result<Self> {
        let g = Self { x_min, x_max, p_min, p_max, nx, np };
        g.validate()?;
        Ok(g)
    }

    /// `[-half, half]^2` with `n` points per axis.
    pub fn square(half: f64, n: usize) -> Self {
        Self { x_min: -half, x_max: half, p_min: -half, p_max: half, nx: n, np: n }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x_min, self.x_max, self.p_min, self.p_max].iter().all(|v| v.is_finite());
        if !finite || !(self.x_max > self.x_min) || !(self.p_max > self.p_min) {
            return Err(Error::InvalidParameter("phase grid ranges must be finite and nonempty".into()));
        }
        if self.nx < Self::MIN_POINTS || self.np < Self::MIN_POINTS {
            return Err(Error::InvalidParameter(format!(
                "phase grid needs at least {} points per axis, got {}x{}",
                Self::MIN_POINTS,
                self.nx,
                self.np
            )));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nx - 1) as f64
    }

    pub fn dp(&self) -> f64 {
        (self.p_max - self.p_min) / (self.np - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    pub fn p(&self, j: usize) -> f64 {
        self.p_min + j as f64 * self.dp()
    }

    pub fn alpha(&self, i: usize, j: usize) -> C64 {
        C64::new(self.x(i), self.p(j))
    }

    /// 2D trapezoidal integral of row-major samples `f[i * np + j]`.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        let w = |k: usize, n: usize| if k == 0 || k + 1 == n { 0.5 } else { 1.0 };
        let mut s = 0.0;
        for i in 0..self.nx {
            let wi = w(i, self.nx);
            for j in 0..self.np {
                s += wi * w(j, self.np) * f[i * self.np + j];
            }
        }
        s * self.dx() * self.dp()
    }
}

/// Samples of a Wigner function, `values[i * np + j] = W(x_i + i p_j)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WignerGrid {
    pub grid: PhaseGrid,
    pub values: Vec<f64>,
}

impl WignerGrid {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.np + j]
    }

    /// Quadrature of `W` over the grid.
    pub fn integral(&self) -> f64 {
        self.grid.integrate(&self.values)
    }

    /// `integral() - trace`: the mass the grid misses, plus quadrature error.
    pub fn normalization_residual(&self, trace: f64) -> f64 {
        self.integral() - trace
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

fn single_mode(rho: &DensityOp) -> Result<()> {
    if rho.space().n_modes() != 1 {
        return Err(Error::InvalidParameter(format!(
            "Wigner functions need a single-mode state, got {} modes",
            rho.space().n_modes()
        )));
    }
    Ok(())
}

/// Wigner function `W(alpha) = (2/pi) Tr[D(alpha) P D(alpha)^dag rho]`, with
/// `P` the photon-number parity, so that `W` integrates to `Tr rho` over
/// `d^2 alpha = dx dp`.
///
/// Matrix elements of the displaced parity are generated column by column
/// with the Laguerre three-term recursion, so no factorials or explicit
/// polynomials appear.
pub fn wigner(rho: &DensityOp, grid: &PhaseGrid) -> Result<WignerGrid> {
    single_mode(rho)?;
    grid.validate()?;
    let np = grid.np;
    let mut values = vec![0.0; grid.nx * np];
    values.par_chunks_mut(np).enumerate().for_each(|(i, row)| {
        let mut work = vec![C64::new(0.0, 0.0); rho.dim()];
        for (j, v) in row.iter_mut().enumerate() {
            *v = wigner_point(rho, grid.alpha(i, j), &mut work);
        }
    });
    Ok(WignerGrid { grid: grid.clone(), values })
}

/// `W(alpha)` for a single point.
pub fn wigner_at(rho: &DensityOp, alpha: C64) -> Result<f64> {
    single_mode(rho)?;
    let mut work = vec![C64::new(0.0, 0.0); rho.dim()];
    Ok(wigner_point(rho, alpha, &mut work))
}

/// `w[n]` holds `<m|D P D^dag|n>`-type coefficients for the current row `m`;
/// row 0 is `(2 alpha)^n / sqrt(n!) e^{-2|alpha|^2}` and each further row
/// follows from the previous one.
fn wigner_point(rho: &DensityOp, alpha: C64, w: &mut [C64]) -> f64 {
    let m_max = rho.dim();
    let a2 = 2.0 * alpha;
    w[0] = C64::new((-2.0 * alpha.norm_sqr()).exp(), 0.0);
    let mut acc = rho.get(0, 0).re * w[0].re;
    for n in 1..m_max {
        w[n] = a2 * w[n - 1] / (n as f64).sqrt();
        acc += 2.0 * (rho.get(0, n) * w[n]).re;
    }
    for m in 1..m_max {
        let sm = (m as f64).sqrt();
        let mut temp = w[m];
        w[m] = (a2.conj() * temp - sm * w[m - 1]) / sm;
        acc += rho.get(m, m).re * w[m].re;
        for n in (m + 1)..m_max {
            let next = (a2 * w[n - 1] - sm * temp) / (n as f64).sqrt();
            temp = w[n];
            w[n] = next;
            acc += 2.0 * (rho.get(m, n) * w[n]).re;
        }
    }
    acc * 2.0 / std::f64::consts::PI
}
