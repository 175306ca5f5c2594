//! Open-system dynamics of the array.
//!
//! Three propagation methods share one recording interface:
//!
//! * [`evolve_master`] integrates the Lindblad master equation for a dense
//!   density matrix;
//! * [`evolve_trajectories`] unravels the same equation into Monte-Carlo
//!   wave functions and averages them;
//! * [`evolve_no_jump`] follows the normalized no-jump branch
//!   `psi' = -i H_eff psi`, i.e. the state conditioned on no photon having
//!   leaked out.
//!
//! Steady states of the driven array come from [`steady_state`], and
//! [`kerr_oracle`] gives the closed-form single-mode Kerr evolution used to
//! validate all of the above.

mod kerr;
mod liouvillian;
pub mod ode;
mod steady;
mod trajectories;

use std::sync::Arc;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

pub use kerr::{analytic_cat, kerr_oracle, CatKind};
pub use liouvillian::{array_collapses, Collapse, Liouvillian};
pub use ode::Tolerances;
pub use steady::{
    excitation_spectrum, steady_state, steady_state_with, ExcitationPoint, SteadyMethod, SteadyOptions,
    SteadyStateResult,
};

use crate::error::{Error, Result};
use crate::fockspace::{
    build_space, coherent_ket, mode_operator, CompositeSpace, DensityOp, Ket, ModeId, OperatorKind, TracePlan,
    TruncationScheme,
};
use crate::linalg::{self, LinOp};
use crate::model::{array_hamiltonian, ArrayParams};

/// Largest density matrix (in complex entries) the dense integrator accepts.
/// The Dormand–Prince stages keep ten such buffers alive.
pub const MAX_DENSE_ELEMENTS: usize = 16_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EvolveMethod {
    DenseMaster,
    Trajectories { n_traj: usize, seed: u64 },
    NoJump,
}

impl EvolveMethod {
    pub fn label(&self) -> &'static str {
        match self {
            EvolveMethod::DenseMaster => "dense_master",
            EvolveMethod::Trajectories { .. } => "trajectories",
            EvolveMethod::NoJump => "no_jump",
        }
    }
}

/// What to integrate and when to record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveSpec {
    pub t_final: f64,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Spacing of recorded samples; `None` records only the endpoints.
    #[serde(default)]
    pub record_stride: Option<f64>,
    /// Explicit sample times, overriding `record_stride`.
    #[serde(default)]
    pub record_times: Option<Vec<f64>>,
    pub method: EvolveMethod,
    /// Certify positivity of the dense state at every sample (Cholesky,
    /// cubic in the dimension).
    #[serde(default = "yes")]
    pub check_positivity: bool,
}

fn yes() -> bool {
    true
}

impl EvolveSpec {
    pub fn new(t_final: f64, method: EvolveMethod) -> Self {
        Self {
            t_final,
            tolerances: Tolerances::default(),
            record_stride: None,
            record_times: None,
            method,
            check_positivity: true,
        }
    }

    pub fn with_stride(mut self, stride: f64) -> Self {
        self.record_stride = Some(stride);
        self
    }

    pub fn with_times(mut self, times: Vec<f64>) -> Self {
        self.record_times = Some(times);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return Err(Error::InvalidParameter(format!("t_final = {} must be positive", self.t_final)));
        }
        self.tolerances.validate()?;
        if let EvolveMethod::Trajectories { n_traj, .. } = self.method {
            if n_traj < 1 {
                return Err(Error::InvalidParameter("n_traj must be at least 1".into()));
            }
        }
        Ok(())
    }

    /// Sample times, starting at 0 and ending at `t_final`.
    pub fn times(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let mut times = vec![0.0];
        if let Some(explicit) = &self.record_times {
            for &t in explicit {
                if !(t > 0.0 && t <= self.t_final) {
                    if t == 0.0 {
                        continue;
                    }
                    return Err(Error::InvalidParameter(format!("record time {t} outside (0, t_final]")));
                }
                times.push(t);
            }
        } else if let Some(stride) = self.record_stride {
            if !(stride > 0.0) {
                return Err(Error::InvalidParameter("record_stride must be positive".into()));
            }
            let n = (self.t_final / stride + 1e-9).floor() as usize;
            times.extend((1..=n).map(|k| k as f64 * stride));
        }
        if (self.t_final - times.last().copied().unwrap_or(0.0)).abs() > 1e-12 * self.t_final {
            times.push(self.t_final);
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("record times must be strictly increasing".into()));
        }
        Ok(times)
    }
}

/// Observables and reduced states to record along an evolution.
#[derive(Debug, Clone, Default)]
pub struct Probes {
    pub observables: Vec<(String, LinOp)>,
    /// Modes whose single-mode reduced state is stored at every sample.
    pub reduced: Vec<ModeId>,
}

impl Probes {
    /// Photon numbers of both edge modes and their reduced states.
    pub fn edge(space: &CompositeSpace) -> Result<Self> {
        let mut observables = Vec::new();
        for m in [ModeId::cw(1), ModeId::ccw(1)] {
            let name = format!("n_{}_{}", m.cavity, m.chirality.to_string().to_lowercase());
            observables.push((name, mode_operator(space, m, OperatorKind::Number)?));
        }
        Ok(Self { observables, reduced: vec![ModeId::cw(1), ModeId::ccw(1)] })
    }
}

/// One recorded observable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Recording {
    pub name: String,
    pub values: Vec<f64>,
    /// Standard error of the ensemble mean; zero for deterministic methods.
    pub std_err: Vec<f64>,
}

/// Stored reduced states of one mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedSeries {
    pub mode: ModeId,
    pub states: Vec<DensityOp>,
}

/// Health of the propagated state, accumulated over every sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub max_trace_drift: f64,
    pub max_hermiticity_error: f64,
    pub max_purity: f64,
    /// `Some(true)` when every sample passed the positivity certificate.
    pub positive: Option<bool>,
    pub rhs_evaluations: usize,
    pub jumps: usize,
}

impl Default for Diagnostics {
    fn default() -> Self {
        Self {
            max_trace_drift: 0.0,
            max_hermiticity_error: 0.0,
            max_purity: 0.0,
            positive: None,
            rhs_evaluations: 0,
            jumps: 0,
        }
    }
}

/// Positivity certificate shift used on recorded density matrices.
pub const POSITIVITY_TOL: f64 = 1e-7;

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub method: EvolveMethod,
    pub times: Vec<f64>,
    pub observables: Vec<Recording>,
    pub reduced: Vec<ReducedSeries>,
    pub diagnostics: Diagnostics,
}

impl Trajectory {
    pub fn observable(&self, name: &str) -> Option<&Recording> {
        self.observables.iter().find(|r| r.name == name)
    }

    pub fn reduced_states(&self, mode: ModeId) -> Option<&[DensityOp]> {
        self.reduced.iter().find(|r| r.mode == mode).map(|r| r.states.as_slice())
    }

    /// Reduced state of `mode` at the last sample.
    pub fn final_reduced(&self, mode: ModeId) -> Option<&DensityOp> {
        self.reduced_states(mode).and_then(|s| s.last())
    }
}

fn plans(space: &CompositeSpace, probes: &Probes) -> Result<Vec<TracePlan>> {
    probes.reduced.iter().map(|&m| TracePlan::new(space, &[m])).collect()
}

fn check_operators(dim: usize, h: &LinOp, probes: &Probes) -> Result<()> {
    if h.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: h.dim() });
    }
    for (_, op) in &probes.observables {
        if op.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: op.dim() });
        }
    }
    Ok(())
}

/// Integrates the master equation from `rho0`.
pub fn evolve_master(
    rho0: &DensityOp,
    h: &LinOp,
    collapses: &[Collapse],
    spec: &EvolveSpec,
    probes: &Probes,
) -> Result<Trajectory> {
    let times = spec.times()?;
    let space = rho0.space().clone();
    let d = space.dim();
    check_operators(d, h, probes)?;
    if d * d > MAX_DENSE_ELEMENTS {
        return Err(Error::Capacity {
            product: format!("{d}x{d} density matrix"),
            dim: (d * d) as u128,
            cap: MAX_DENSE_ELEMENTS as u128,
        });
    }
    let plans = plans(&space, probes)?;
    let l = Liouvillian::new(h.clone(), collapses.to_vec())?;
    let tr0 = rho0.trace();

    let mut values = vec![Vec::with_capacity(times.len()); probes.observables.len()];
    let mut reduced: Vec<Vec<DensityOp>> = vec![Vec::new(); plans.len()];
    let mut diag = Diagnostics { positive: spec.check_positivity.then_some(true), ..Diagnostics::default() };

    let record = |_: usize, _t: f64, rho: &[C64]| -> Result<()> {
        diag.max_trace_drift = diag.max_trace_drift.max((linalg::dense_trace(d, rho).re - tr0).abs());
        diag.max_hermiticity_error = diag.max_hermiticity_error.max(linalg::dense_hermiticity_error(d, rho));
        diag.max_purity = diag.max_purity.max(linalg::norm_sqr(rho));
        if spec.check_positivity && !linalg::cholesky_certifies_psd(d, rho, POSITIVITY_TOL) {
            diag.positive = Some(false);
        }
        for ((_, op), v) in probes.observables.iter().zip(values.iter_mut()) {
            v.push(op.trace_with(rho).re);
        }
        for (plan, out) in plans.iter().zip(reduced.iter_mut()) {
            out.push(DensityOp::new_unchecked(plan.subspace().clone(), plan.reduce_dense(rho, d))?);
        }
        Ok(())
    };
    let mut evals = 0;
    {
        let counter = Counting { inner: &l, count: std::cell::Cell::new(0) };
        ode::integrate(&counter, rho0.as_slice().to_vec(), &times, spec.tolerances, record)?;
        evals += counter.count.get();
    }
    diag.rhs_evaluations = evals;
    Ok(Trajectory {
        method: EvolveMethod::DenseMaster,
        observables: finish_recordings(probes, values, None),
        reduced: probes
            .reduced
            .iter()
            .zip(reduced)
            .map(|(&mode, states)| ReducedSeries { mode, states })
            .collect(),
        times,
        diagnostics: diag,
    })
}

struct Counting<'a, R> {
    inner: &'a R,
    count: std::cell::Cell<usize>,
}

impl<R: ode::Rhs> ode::Rhs for Counting<'_, R> {
    fn eval(&self, t: f64, y: &[C64], dy: &mut [C64]) {
        self.count.set(self.count.get() + 1);
        self.inner.eval(t, y, dy);
    }
}

fn finish_recordings(probes: &Probes, values: Vec<Vec<f64>>, std_err: Option<Vec<Vec<f64>>>) -> Vec<Recording> {
    let std_err = std_err.unwrap_or_else(|| values.iter().map(|v| vec![0.0; v.len()]).collect());
    probes
        .observables
        .iter()
        .zip(values.into_iter().zip(std_err))
        .map(|((name, _), (values, std_err))| Recording { name: name.clone(), values, std_err })
        .collect()
}

pub use trajectories::{evolve_no_jump, evolve_trajectories};

/// Dispatches on `spec.method`, starting from the pure state `psi0`.
pub fn evolve(psi0: &Ket, h: &LinOp, collapses: &[Collapse], spec: &EvolveSpec, probes: &Probes) -> Result<Trajectory> {
    match spec.method {
        EvolveMethod::DenseMaster => evolve_master(&psi0.to_density(), h, collapses, spec, probes),
        EvolveMethod::Trajectories { .. } => evolve_trajectories(psi0, h, collapses, spec, probes),
        EvolveMethod::NoJump => evolve_no_jump(psi0, h, collapses, spec, probes),
    }
}

/// Cat generation run: coherent `alpha0` injected into `a_{1,dir}`, all
/// other modes in vacuum, evolving under the undriven array Hamiltonian
/// with loss `kappa` on every mode. Records both edge photon numbers and
/// both edge reduced states.
pub fn simulate_generation(p: &ArrayParams, trunc: &TruncationScheme, spec: &EvolveSpec) -> Result<(Arc<CompositeSpace>, Trajectory)> {
    let space = build_space(p.n_cavities, trunc)?;
    let h = array_hamiltonian(&space, p)?;
    let collapses = array_collapses(&space, p, false)?;
    let psi0 = coherent_ket(&space, p.driven_mode(), C64::new(p.alpha0, 0.0))?;
    let probes = Probes::edge(&space)?;
    let traj = evolve(&psi0, &h, &collapses, spec, &probes)?;
    Ok((space, traj))
}
