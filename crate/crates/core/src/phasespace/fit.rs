use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{fidelity_pure, macroscopicity, negativity};
use super::wigner::{wigner, PhaseGrid};
use crate::error::{Error, Result};
use crate::fockspace::{coherent_amplitudes, DensityOp};

/// Lower bound on the fitted cat amplitude.
pub const ETA_MIN: f64 = 1.5;

/// Cat family the fit searches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CatFamily {
    /// `N(|-eta e^{i theta}> + e^{i beta} |eta e^{i theta}>)`.
    Two,
    /// Kerr three-component cat built on `eta e^{i theta}`; `beta` is unused.
    Three,
}

/// Amplitudes of a cat state on `cutoff` Fock levels, normalized on those
/// levels. `cutoff` should be generous: callers truncate without
/// renormalizing.
pub fn cat_amplitudes(family: CatFamily, eta: f64, beta: f64, theta: f64, cutoff: usize) -> Vec<C64> {
    let centre = C64::from_polar(eta, theta);
    let terms: Vec<(C64, C64)> = match family {
        CatFamily::Two => vec![(C64::new(1.0, 0.0), -centre), (C64::from_polar(1.0, beta), centre)],
        CatFamily::Three => {
            let w = C64::from_polar(1.0, -PI / 3.0);
            let c1 = (1.0 - 2.0 * w) / 3.0;
            let c2 = (1.0 + w) / 3.0;
            vec![
                (c1, centre * C64::from_polar(1.0, -2.0 * PI / 3.0)),
                (c2, centre),
                (c2, centre * C64::from_polar(1.0, 2.0 * PI / 3.0)),
            ]
        }
    };
    let mut amps = vec![C64::new(0.0, 0.0); cutoff];
    for (c, b) in terms {
        for (a, v) in amps.iter_mut().zip(coherent_amplitudes(b, cutoff)) {
            *a += c * v;
        }
    }
    let n = amps.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    if n > 0.0 {
        amps.iter_mut().for_each(|v| *v /= n);
    }
    amps
}

/// Fock levels kept for a cat of amplitude `eta`: the tail beyond carries
/// well under `1e-12` of the norm.
pub fn cat_cutoff(eta: f64, at_least: usize) -> usize {
    let mean = eta * eta;
    ((mean + 12.0 * eta.max(1.0) + 20.0).ceil() as usize).max(at_least)
}

fn wrap(angle: f64) -> f64 {
    let a = (angle + PI).rem_euclid(2.0 * PI) - PI;
    if a <= -PI {
        PI
    } else {
        a
    }
}

/// Result of the best-fit-cat search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CatFit {
    pub family: CatFamily,
    pub eta: f64,
    pub beta: f64,
    /// Rotation of the cat in phase space.
    pub theta: f64,
    /// `integral (W_rho - W_cat)^2 d^2 alpha`.
    pub residual: f64,
    /// `sqrt(<cat|rho|cat>)`.
    pub fidelity: f64,
    /// Every local search met its simplex tolerance.
    pub converged: bool,
    /// Best overlap under one half: the state is not close to any admissible
    /// cat.
    pub poor: bool,
}

impl CatFit {
    /// `|alpha|^2` of the fitted cat.
    pub fn size(&self) -> f64 {
        self.eta * self.eta
    }

    pub fn amplitudes(&self, cutoff: usize) -> Vec<C64> {
        cat_amplitudes(self.family, self.eta, self.beta, self.theta, cutoff)
    }
}

/// Multi-start settings for [`fit_cat`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    pub family: CatFamily,
    /// Upper end of the starting lattice in `eta`, normally `alpha0 + 1`.
    pub eta_max: f64,
    pub eta_starts: usize,
    pub theta_starts: usize,
    pub beta_seeds: Vec<f64>,
    /// Simplex spread, in objective units, at which a local search stops.
    pub ftol: f64,
    pub max_evaluations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            family: CatFamily::Two,
            eta_max: 3.0,
            eta_starts: 6,
            theta_starts: 8,
            beta_seeds: vec![PI / 2.0, -PI / 2.0, 0.0, PI],
            ftol: 1e-13,
            max_evaluations: 2000,
        }
    }
}

/// Overlap objective. Because `Tr(rho sigma) = pi integral W_rho W_sigma`,
/// the Wigner-space distance to a pure cat is
/// `(Tr rho^2 + 1 - 2 <cat|rho|cat>) / pi`: only the overlap varies.
struct Objective<'a> {
    rho: &'a DensityOp,
    purity: f64,
    family: CatFamily,
}

impl Objective<'_> {
    fn overlap(&self, eta: f64, beta: f64, theta: f64) -> f64 {
        let amps = cat_amplitudes(self.family, eta, beta, theta, cat_cutoff(eta, self.rho.dim()));
        self.rho.overlap_with(&amps[..self.rho.dim()])
    }

    fn distance(&self, overlap: f64) -> f64 {
        ((self.purity + 1.0 - 2.0 * overlap) / PI).max(0.0)
    }

    /// Clamped objective plus a quadratic wall below `ETA_MIN`.
    fn penalized(&self, x: &[f64; 3]) -> f64 {
        let eta = x[0].max(ETA_MIN);
        let wall = (ETA_MIN - x[0]).max(0.0);
        self.distance(self.overlap(eta, x[1], x[2])) + wall * wall
    }
}

/// Grid version of the fit objective, `integral (W_rho - W_cat)^2`, for
/// cross-checking the overlap identity.
pub fn cat_objective_on_grid(rho: &DensityOp, fit: &CatFit, grid: &PhaseGrid) -> Result<f64> {
    let cut = cat_cutoff(fit.eta, rho.dim());
    let cat = crate::fockspace::Ket::new(crate::fockspace::single_mode_space(cut), fit.amplitudes(cut))?;
    let wc = wigner(&cat.to_density(), grid)?;
    let wr = wigner(rho, grid)?;
    let diff: Vec<f64> = wr.values.iter().zip(&wc.values).map(|(a, b)| (a - b) * (a - b)).collect();
    Ok(grid.integrate(&diff))
}

/// Nelder–Mead on three parameters. Returns the best vertex, its value and
/// whether the spread criterion was met.
fn nelder_mead(f: impl Fn(&[f64; 3]) -> f64, start: [f64; 3], step: [f64; 3], ftol: f64, max_eval: usize) -> ([f64; 3], f64, bool) {
    let mut simplex = vec![start; 4];
    for k in 0..3 {
        simplex[k + 1][k] += step[k];
    }
    let mut vals: Vec<f64> = simplex.iter().map(&f).collect();
    let mut evals = 4;
    let lerp = |a: &[f64; 3], b: &[f64; 3], t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2])];
    loop {
        let mut order: Vec<usize> = (0..4).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        simplex = order.iter().map(|&i| simplex[i]).collect();
        vals = order.iter().map(|&i| vals[i]).collect();
        if vals[3] - vals[0] <= ftol * (1.0 + vals[0].abs()) {
            return (simplex[0], vals[0], true);
        }
        if evals >= max_eval {
            return (simplex[0], vals[0], false);
        }
        let mut centroid = [0.0; 3];
        for v in &simplex[..3] {
            for k in 0..3 {
                centroid[k] += v[k] / 3.0;
            }
        }
        let worst = simplex[3];
        let reflected = lerp(&centroid, &worst, -1.0);
        let fr = f(&reflected);
        evals += 1;
        if fr < vals[0] {
            let expanded = lerp(&centroid, &worst, -2.0);
            let fe = f(&expanded);
            evals += 1;
            if fe < fr {
                simplex[3] = expanded;
                vals[3] = fe;
            } else {
                simplex[3] = reflected;
                vals[3] = fr;
            }
        } else if fr < vals[2] {
            simplex[3] = reflected;
            vals[3] = fr;
        } else {
            let (target, ft) = if fr < vals[3] { (reflected, fr) } else { (worst, vals[3]) };
            let contracted = lerp(&centroid, &target, 0.5);
            let fc = f(&contracted);
            evals += 1;
            if fc < ft {
                simplex[3] = contracted;
                vals[3] = fc;
            } else {
                for i in 1..4 {
                    simplex[i] = lerp(&simplex[0], &simplex[i], 0.5);
                    vals[i] = f(&simplex[i]);
                }
                evals += 3;
            }
        }
    }
}

/// Best-fit cat of a single-mode state: minimizes the Wigner-space distance
/// over `eta >= ETA_MIN`, `beta` and `theta`, starting a simplex search from
/// every point of an `eta x theta` lattice for each `beta` seed. Ties between
/// starts resolve to the lowest start index, so the result does not depend
/// on thread count.
pub fn fit_cat(rho: &DensityOp, opts: &FitOptions) -> Result<CatFit> {
    if rho.space().n_modes() != 1 {
        return Err(Error::InvalidParameter("cat fits need a single-mode state".into()));
    }
    if opts.eta_starts == 0 || opts.theta_starts == 0 || !(opts.eta_max >= ETA_MIN) {
        return Err(Error::InvalidParameter("fit lattice must be nonempty with eta_max >= 1.5".into()));
    }
    let obj = Objective { rho, purity: rho.purity(), family: opts.family };
    let betas: Vec<f64> = match opts.family {
        CatFamily::Two if !opts.beta_seeds.is_empty() => opts.beta_seeds.clone(),
        _ => vec![0.0],
    };
    let mut starts = Vec::new();
    for &beta in &betas {
        for a in 0..opts.eta_starts {
            let eta = if opts.eta_starts == 1 {
                ETA_MIN
            } else {
                ETA_MIN + (opts.eta_max - ETA_MIN) * a as f64 / (opts.eta_starts - 1) as f64
            };
            for b in 0..opts.theta_starts {
                let theta = -PI + 2.0 * PI * b as f64 / opts.theta_starts as f64;
                starts.push([eta, beta, theta]);
            }
        }
    }
    let beta_step = if opts.family == CatFamily::Two { 0.3 } else { 0.0 };
    let runs: Vec<([f64; 3], f64, bool)> = starts
        .par_iter()
        .map(|s| {
            nelder_mead(|x| obj.penalized(x), *s, [0.2, beta_step, 0.3], opts.ftol, opts.max_evaluations)
        })
        .collect();
    let converged = runs.iter().all(|r| r.2);
    let best = runs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1).then(a.0.cmp(&b.0)))
        .map(|(_, r)| *r)
        .expect("at least one start");
    let x = best.0;
    let (eta, beta, theta) = (x[0].max(ETA_MIN), wrap(x[1]), wrap(x[2]));
    let overlap = obj.overlap(eta, beta, theta);
    if !converged {
        log::warn!("cat fit: some simplex searches hit the evaluation limit");
    }
    Ok(CatFit {
        family: opts.family,
        eta,
        beta: if opts.family == CatFamily::Two { beta } else { 0.0 },
        theta,
        residual: obj.distance(overlap),
        fidelity: overlap.max(0.0).sqrt().min(1.0),
        converged,
        poor: overlap < 0.5,
    })
}

/// Cat-quality figures of one mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeMetrics {
    pub photons: f64,
    pub negativity: f64,
    pub macroscopicity: f64,
    pub macroscopicity_error: f64,
    pub fidelity: f64,
    /// `|alpha|^2` of the fitted cat.
    pub size: f64,
    pub fit: CatFit,
    /// Grid quadrature of `W` over `Tr rho`.
    pub coverage: f64,
}

/// Metrics of both edge modes and their nonreciprocal rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricSet {
    pub cw: ModeMetrics,
    pub ccw: ModeMetrics,
    pub r_k: f64,
    pub r_f: f64,
}

pub fn mode_metrics(rho: &DensityOp, grid: &PhaseGrid, opts: &FitOptions) -> Result<ModeMetrics> {
    let w = wigner(rho, grid)?;
    let tr = rho.trace();
    let coverage = w.integral() / tr;
    if !(coverage > super::metrics::COVERAGE_MIN) {
        log::warn!("phase grid captures {coverage:.5} of the state's trace");
    }
    let m = macroscopicity(&w);
    let fit = fit_cat(rho, opts)?;
    let photons = (0..rho.dim()).map(|n| n as f64 * rho.get(n, n).re).sum();
    let cut = cat_cutoff(fit.eta, rho.dim());
    Ok(ModeMetrics {
        photons,
        negativity: negativity(&w),
        macroscopicity: m.value,
        macroscopicity_error: m.error_estimate,
        fidelity: fidelity_pure(rho, &fit.amplitudes(cut))?,
        size: fit.size(),
        fit,
        coverage,
    })
}

/// Metrics of the two edge-mode states, as in a generation run.
pub fn metric_set(cw: &DensityOp, ccw: &DensityOp, grid: &PhaseGrid, opts: &FitOptions) -> Result<MetricSet> {
    let a = mode_metrics(cw, grid, opts)?;
    let b = mode_metrics(ccw, grid, opts)?;
    let (r_k, r_f) = super::metrics::nonreciprocal_rates(a.photons, b.photons, a.fidelity, b.fidelity)?;
    Ok(MetricSet { cw: a, ccw: b, r_k, r_f })
}
