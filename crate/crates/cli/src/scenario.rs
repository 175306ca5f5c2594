//! Scenario files: one TOML document naming the array parameters and the
//! outputs to produce from them.
//!
//! Rates are in units of `kappa`. Evolution times are given as `chi t`, the
//! natural clock of Kerr-cat generation; every output also reports
//! `t` in units of `1/kappa`.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use topocat::dynamics::{EvolveMethod, EvolveSpec, SteadyOptions, Tolerances, MAX_DENSE_ELEMENTS};
use topocat::fockspace::{build_space, Chirality, TruncationScheme};
use topocat::model::ArrayParams;
use topocat::phasespace::{FitOptions, PhaseGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Seeds trajectory ensembles; dense paths ignore it.
    #[serde(default)]
    pub seed: u64,
    /// Defaults to `out/<name>`.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub params: ArrayParams,
    #[serde(default, rename = "output")]
    pub outputs: Vec<Output>,
}

/// One requested product. `params` overrides fields of the scenario-level
/// parameters; `scan` repeats the task over a list of parameter values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Output {
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub params: Option<toml::Table>,
    #[serde(default)]
    pub scan: Option<Scan>,
    #[serde(flatten)]
    pub task: Task,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Task {
    Spectrum(Empty),
    Winding(Empty),
    EdgeProfile(Empty),
    Evolve(EvolveTask),
    Wigner(WignerTask),
    Metrics(MetricsTask),
    Excitation(ExcitationTask),
    Transmission(TransmissionTask),
}

impl Task {
    pub fn kind(&self) -> &'static str {
        match self {
            Task::Spectrum(_) => "spectrum",
            Task::Winding(_) => "winding",
            Task::EdgeProfile(_) => "edge_profile",
            Task::Evolve(_) => "evolve",
            Task::Wigner(_) => "wigner",
            Task::Metrics(_) => "metrics",
            Task::Excitation(_) => "excitation",
            Task::Transmission(_) => "transmission",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Empty {}

/// Inclusive, evenly spaced range or an explicit list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sweep {
    Values(Vec<f64>),
    Range(Range),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl Sweep {
    pub fn values(&self) -> Result<Vec<f64>, String> {
        let v = match self {
            Sweep::Values(v) => v.clone(),
            Sweep::Range(r) => match r.points {
                0 => return Err("a range needs at least one point".into()),
                1 => vec![r.start],
                n => (0..n).map(|k| r.start + (r.stop - r.start) * k as f64 / (n - 1) as f64).collect(),
            },
        };
        if v.is_empty() {
            return Err("sweep is empty".into());
        }
        if let Some(x) = v.iter().find(|x| !x.is_finite()) {
            return Err(format!("sweep value {x} is not finite"));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanParam {
    /// Sets `t1 = value * t2`.
    T1OverT2,
    /// Sets `chi_c = value * chi`.
    ChiCOverChi,
    NCavities,
    T1,
    T2,
    Chi,
    Eps,
    Delta,
}

impl ScanParam {
    pub fn column(self) -> &'static str {
        match self {
            ScanParam::T1OverT2 => "t1_over_t2",
            ScanParam::ChiCOverChi => "chi_c_over_chi",
            ScanParam::NCavities => "n_cavities",
            ScanParam::T1 => "t1_per_kappa",
            ScanParam::T2 => "t2_per_kappa",
            ScanParam::Chi => "chi_per_kappa",
            ScanParam::Eps => "eps_per_sqrt_kappa",
            ScanParam::Delta => "delta_per_kappa",
        }
    }

    fn apply(self, p: &mut ArrayParams, v: f64) -> Result<(), String> {
        match self {
            ScanParam::T1OverT2 => p.t1 = v * p.t2,
            ScanParam::ChiCOverChi => p.chi_c = v * p.chi,
            ScanParam::NCavities => {
                if v < 1.0 || v.fract() != 0.0 {
                    return Err(format!("n_cavities scan value {v} is not a positive integer"));
                }
                p.n_cavities = v as usize;
            }
            ScanParam::T1 => p.t1 = v,
            ScanParam::T2 => p.t2 = v,
            ScanParam::Chi => p.chi = v,
            ScanParam::Eps => p.eps = v,
            ScanParam::Delta => p.delta = v,
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scan {
    pub param: ScanParam,
    pub values: Sweep,
}

fn both() -> Vec<Chirality> {
    vec![Chirality::Cw, Chirality::Ccw]
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    DenseMaster,
    Trajectories,
    NoJump,
}

/// Time axis and propagation method of a cat-generation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Evolution {
    pub chi_t_final: f64,
    /// Sample spacing in `chi t`; only the endpoints when absent.
    #[serde(default)]
    pub chi_t_stride: Option<f64>,
    /// Explicit samples in `chi t`, overriding the stride.
    #[serde(default)]
    pub chi_t_samples: Option<Vec<f64>>,
    #[serde(default)]
    pub method: Method,
    #[serde(default)]
    pub n_traj: Option<usize>,
    #[serde(default)]
    pub tolerances: Option<Tolerances>,
    #[serde(default = "yes")]
    pub check_positivity: bool,
}

impl Evolution {
    pub fn spec(&self, chi: f64, seed: u64) -> Result<EvolveSpec, String> {
        if !(chi > 0.0) {
            return Err("evolution times are given as chi t and need chi > 0".into());
        }
        let method = match self.method {
            Method::DenseMaster => EvolveMethod::DenseMaster,
            Method::NoJump => EvolveMethod::NoJump,
            Method::Trajectories => EvolveMethod::Trajectories {
                n_traj: self.n_traj.ok_or("method = \"trajectories\" needs n_traj")?,
                seed,
            },
        };
        let mut spec = EvolveSpec::new(self.chi_t_final / chi, method);
        if let Some(s) = self.chi_t_stride {
            spec = spec.with_stride(s / chi);
        }
        if let Some(s) = &self.chi_t_samples {
            spec = spec.with_times(s.iter().map(|x| x / chi).collect());
        }
        if let Some(t) = self.tolerances {
            spec.tolerances = t;
        }
        spec.check_positivity = self.check_positivity && self.method == Method::DenseMaster;
        spec.times().map_err(|e| e.to_string())?;
        Ok(spec)
    }
}

/// Fock truncation. Absent fields fall back to edge cutoff
/// `ceil(|a0|^2 + 5|a0|)` and bulk cutoff 4.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Truncation {
    #[serde(default)]
    pub edge: Option<usize>,
    #[serde(default)]
    pub bulk: Option<usize>,
    /// Per-mode cutoffs in canonical order, overriding `edge` and `bulk`.
    #[serde(default)]
    pub cutoffs: Option<Vec<usize>>,
    /// Keep only states with at most this many photons in total.
    #[serde(default)]
    pub max_excitations: Option<usize>,
    #[serde(default)]
    pub dim_cap: Option<u64>,
}

impl Truncation {
    pub fn scheme(&self, p: &ArrayParams) -> TruncationScheme {
        let default = TruncationScheme::default_for(p.n_cavities, p.alpha0);
        let mut t = match &self.cutoffs {
            Some(c) => TruncationScheme::new(c.clone()),
            None => TruncationScheme::edge_bulk(
                p.n_cavities,
                self.edge.unwrap_or(default.cutoffs[0]),
                self.bulk.unwrap_or(4),
            ),
        };
        t.max_excitations = self.max_excitations;
        if let Some(c) = self.dim_cap {
            t.dim_cap = c as u128;
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveTask {
    /// Injection directions; each gets its own run.
    #[serde(default = "both")]
    pub directions: Vec<Chirality>,
    pub evolution: Evolution,
    #[serde(default)]
    pub truncation: Truncation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WignerTask {
    #[serde(default = "both")]
    pub directions: Vec<Chirality>,
    pub evolution: Evolution,
    #[serde(default)]
    pub truncation: Truncation,
    #[serde(default)]
    pub grid: PhaseGrid,
    /// Samples (in `chi t`) at which the injected mode's Wigner function is
    /// written; must be recorded times of the evolution.
    pub at_chi_t: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsTask {
    #[serde(default = "both")]
    pub directions: Vec<Chirality>,
    pub evolution: Evolution,
    #[serde(default)]
    pub truncation: Truncation,
    #[serde(default)]
    pub grid: PhaseGrid,
    #[serde(default)]
    pub fit: FitOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExcitationTask {
    #[serde(default = "both")]
    pub directions: Vec<Chirality>,
    /// Drive detunings `Delta` in units of `kappa`.
    pub delta: Sweep,
    #[serde(default)]
    pub truncation: Truncation,
    #[serde(default)]
    pub steady: SteadyOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceChoice {
    Numeric,
    Analytic,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransmissionTask {
    pub source: SourceChoice,
    /// Probe detunings in units of `kappa`.
    pub delta_p: Sweep,
    /// Only used by the numeric source when Kerr terms are present.
    #[serde(default)]
    pub truncation: Truncation,
    #[serde(default)]
    pub steady: SteadyOptions,
}

/// An output with its parameters resolved for every scan value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedOutput {
    pub index: usize,
    pub name: String,
    pub scan_column: Option<&'static str>,
    pub points: Vec<(Option<f64>, ArrayParams)>,
}

pub fn parse(text: &str) -> Result<Scenario, String> {
    toml::from_str(text).map_err(|e| e.to_string())
}

fn merged_params(base: &ArrayParams, patch: Option<&toml::Table>) -> Result<ArrayParams, String> {
    let Some(patch) = patch else { return Ok(base.clone()) };
    let mut table = toml::Table::try_from(base).map_err(|e| e.to_string())?;
    for (k, v) in patch {
        table.insert(k.clone(), v.clone());
    }
    table.try_into().map_err(|e: toml::de::Error| format!("output params: {e}"))
}

/// Checks everything that can be checked without running: parameter
/// ranges, sweeps, time axes, truncations and per-task preconditions.
pub fn validate(s: &Scenario) -> Result<Vec<ResolvedOutput>, String> {
    if s.name.is_empty() || !s.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
        return Err(format!("scenario name {:?} must be nonempty and use only [A-Za-z0-9_-]", s.name));
    }
    if s.outputs.is_empty() {
        return Err("scenario declares no [[output]] tables".into());
    }
    let mut resolved = Vec::new();
    let mut names = std::collections::BTreeSet::new();
    for (i, out) in s.outputs.iter().enumerate() {
        let name = format!("{:02}_{}", i + 1, out.label.as_deref().unwrap_or(out.task.kind()));
        if !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') || !names.insert(name.clone()) {
            return Err(format!("output label {name:?} is not a unique [A-Za-z0-9_-] name"));
        }
        let ctx = |e: String| format!("output {name}: {e}");
        let base = merged_params(&s.params, out.params.as_ref()).map_err(ctx)?;
        let mut points = Vec::new();
        match &out.scan {
            None => points.push((None, base.clone())),
            Some(scan) => {
                for v in scan.values.values().map_err(ctx)? {
                    let mut p = base.clone();
                    scan.param.apply(&mut p, v).map_err(ctx)?;
                    points.push((Some(v), p));
                }
            }
        }
        for (_, p) in &points {
            p.validate().map_err(|e| ctx(e.to_string()))?;
            check_task(&out.task, p, s.seed).map_err(ctx)?;
        }
        resolved.push(ResolvedOutput { index: i, name, scan_column: out.scan.as_ref().map(|s| s.param.column()), points });
    }
    Ok(resolved)
}

fn check_space(p: &ArrayParams, t: &Truncation, dense: bool) -> Result<(), String> {
    let space = build_space(p.n_cavities, &t.scheme(p)).map_err(|e| e.to_string())?;
    let d = space.dim();
    if dense && d.saturating_mul(d) > MAX_DENSE_ELEMENTS {
        return Err(format!(
            "dense density matrix of dimension {d} exceeds {MAX_DENSE_ELEMENTS} elements; cap the excitations or use trajectories"
        ));
    }
    Ok(())
}

fn check_task(task: &Task, p: &ArrayParams, seed: u64) -> Result<(), String> {
    let dirs_ok = |d: &[Chirality]| if d.is_empty() { Err("directions is empty".to_string()) } else { Ok(()) };
    match task {
        Task::Spectrum(_) | Task::EdgeProfile(_) | Task::Winding(_) => Ok(()),
        Task::Evolve(t) => {
            dirs_ok(&t.directions)?;
            t.evolution.spec(p.chi, seed)?;
            check_space(p, &t.truncation, t.evolution.method == Method::DenseMaster)
        }
        Task::Wigner(t) => {
            dirs_ok(&t.directions)?;
            let spec = t.evolution.spec(p.chi, seed)?;
            t.grid.validate().map_err(|e| e.to_string())?;
            if t.at_chi_t.is_empty() {
                return Err("at_chi_t is empty".into());
            }
            let times = spec.times().map_err(|e| e.to_string())?;
            for &c in &t.at_chi_t {
                if !times.iter().any(|&x| (x * p.chi - c).abs() < 1e-9 * c.abs().max(1.0)) {
                    return Err(format!("chi t = {c} is not a recorded sample of the evolution"));
                }
            }
            check_space(p, &t.truncation, t.evolution.method == Method::DenseMaster)
        }
        Task::Metrics(t) => {
            dirs_ok(&t.directions)?;
            t.evolution.spec(p.chi, seed)?;
            t.grid.validate().map_err(|e| e.to_string())?;
            check_space(p, &t.truncation, t.evolution.method == Method::DenseMaster)
        }
        Task::Excitation(t) => {
            dirs_ok(&t.directions)?;
            t.delta.values()?;
            check_space(p, &t.truncation, false)
        }
        Task::Transmission(t) => {
            t.delta_p.values()?;
            let linear = p.chi == 0.0 && p.chi_c == 0.0;
            if t.source != SourceChoice::Numeric {
                if !linear {
                    return Err("the analytic transmission needs chi = chi_c = 0".into());
                }
                if (p.gamma_drive - p.kappa).abs() > 1e-12 * p.kappa {
                    return Err("the analytic transmission needs gamma_drive = kappa".into());
                }
            }
            if !linear {
                if p.eps == 0.0 {
                    return Err("transmission through the Kerr array needs eps != 0".into());
                }
                check_space(p, &t.truncation, false)?;
            }
            Ok(())
        }
    }
}
