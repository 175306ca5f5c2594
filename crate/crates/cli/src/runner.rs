//! Executes validated scenarios and writes their CSV outputs and manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use topocat::dynamics::{excitation_spectrum, simulate_generation, Trajectory};
use topocat::fockspace::{Chirality, DensityOp, ModeId};
use topocat::model::{edge_profile, single_excitation_spectrum, winding_number, ArrayParams};
use topocat::phasespace::{mode_metrics, nonreciprocal_rates, wigner, ModeMetrics};
use topocat::response::{analytic_amplitudes, kerr_amplitude, qle_matrix};
use topocat::{Error, C64};

use crate::scenario::{self, Evolution, ResolvedOutput, Scenario, SourceChoice, Task, Truncation};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Rows of one CSV file, all cells already formatted.
struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(scan: Option<&str>, cols: &[&str]) -> Self {
        let header = scan.into_iter().chain(cols.iter().copied()).map(String::from).collect();
        Self { header, rows: Vec::new() }
    }

    fn push(&mut self, scan: Option<f64>, cells: Vec<String>) {
        self.rows.push(scan.map(num).into_iter().chain(cells).collect());
    }
}

/// Shortest round-trip decimal, switching to exponent form for very small
/// or large magnitudes.
fn num(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

fn dir(d: Chirality) -> String {
    d.to_string().to_lowercase()
}

#[derive(Debug, Clone, Serialize)]
pub struct FileRecord {
    pub file: String,
    pub output: String,
    pub rows: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub output: String,
    pub class: &'static str,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub scenario: Scenario,
    pub resolved: Vec<ResolvedOutput>,
    pub workers: usize,
    pub started_unix_s: u64,
    pub wall_clock_s: f64,
    pub status: &'static str,
    pub files: Vec<FileRecord>,
    /// Solver health per output, e.g. trace drift or steady-state residuals.
    pub diagnostics: Vec<(String, Value)>,
    pub failure: Option<Failure>,
}

/// Errors that come from the numerics rather than from the configuration.
pub fn is_numerical(e: &Error) -> bool {
    matches!(
        e,
        Error::StepSizeCollapse { .. }
            | Error::Singular(_)
            | Error::AmbiguousSteadyState(_)
            | Error::NoConvergence(_)
            | Error::NotPositive(_)
            | Error::ZeroDenominator(_)
            | Error::GapClosing(_)
    )
}

enum RunError {
    Model(Error),
    Io(String),
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        RunError::Model(e)
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e.to_string())
    }
}

impl From<csv::Error> for RunError {
    fn from(e: csv::Error) -> Self {
        RunError::Io(e.to_string())
    }
}

/// Result of [`run`]: the manifest (already on disk when it could be
/// written) and the process exit code.
pub struct Outcome {
    pub manifest: Option<Manifest>,
    pub exit_code: i32,
    /// Machine-readable error for validation failures.
    pub error: Option<Value>,
}

pub fn validation_error(message: &str) -> Value {
    json!({ "error": "validation", "message": message })
}

pub fn default_output_dir(s: &Scenario) -> PathBuf {
    s.output_dir.clone().unwrap_or_else(|| PathBuf::from("out").join(&s.name))
}

pub fn run(s: &Scenario, out_dir: &Path) -> Outcome {
    let resolved = match scenario::validate(s) {
        Ok(r) => r,
        Err(m) => return Outcome { manifest: None, exit_code: EXIT_VALIDATION, error: Some(validation_error(&m)) },
    };
    let clock = Instant::now();
    let mut manifest = Manifest {
        tool: "topocat",
        version: env!("CARGO_PKG_VERSION"),
        scenario: s.clone(),
        resolved: resolved.clone(),
        workers: rayon::current_num_threads(),
        started_unix_s: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        wall_clock_s: 0.0,
        status: "ok",
        files: Vec::new(),
        diagnostics: Vec::new(),
        failure: None,
    };
    if let Err(e) = fs::create_dir_all(out_dir) {
        let err = json!({ "error": "io", "message": format!("{}: {e}", out_dir.display()) });
        return Outcome { manifest: None, exit_code: EXIT_IO, error: Some(err) };
    }
    let mut exit_code = EXIT_OK;
    for r in &resolved {
        log::info!("running {}", r.name);
        let out = &s.outputs[r.index];
        let mut diags = Vec::new();
        let result = run_task(&out.task, r, s.seed, &mut diags)
            .and_then(|tables| write_tables(out_dir, &r.name, tables, &mut manifest.files));
        manifest.diagnostics.push((r.name.clone(), Value::Array(diags)));
        if let Err(e) = result {
            let (class, message, code) = match e {
                RunError::Model(e) if is_numerical(&e) => ("numerical", e.to_string(), EXIT_NUMERICAL),
                RunError::Model(e) => ("validation", e.to_string(), EXIT_VALIDATION),
                RunError::Io(m) => ("io", m, EXIT_IO),
            };
            log::error!("{}: {message}", r.name);
            manifest.status = "failed";
            manifest.failure = Some(Failure { output: r.name.clone(), class, message });
            exit_code = code;
            break;
        }
    }
    manifest.wall_clock_s = clock.elapsed().as_secs_f64();
    let error = manifest.failure.as_ref().map(|f| json!({ "error": f.class, "output": f.output, "message": f.message }));
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    if let Err(e) = fs::write(out_dir.join("manifest.json"), text) {
        let err = json!({ "error": "io", "message": format!("manifest: {e}") });
        return Outcome { manifest: Some(manifest), exit_code: EXIT_IO, error: Some(err) };
    }
    Outcome { manifest: Some(manifest), exit_code, error }
}

fn write_tables(dir: &Path, name: &str, tables: Vec<(&'static str, Table)>, files: &mut Vec<FileRecord>) -> Result<(), RunError> {
    for (suffix, table) in tables {
        let file = if suffix.is_empty() { format!("{name}.csv") } else { format!("{name}_{suffix}.csv") };
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&table.header)?;
        for row in &table.rows {
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| RunError::Io(e.to_string()))?;
        fs::write(dir.join(&file), &bytes)?;
        files.push(FileRecord {
            file,
            output: name.to_string(),
            rows: table.rows.len(),
            sha256: format!("{:x}", Sha256::digest(&bytes)),
        });
    }
    Ok(())
}

fn run_task(
    task: &Task,
    r: &ResolvedOutput,
    seed: u64,
    diags: &mut Vec<Value>,
) -> Result<Vec<(&'static str, Table)>, RunError> {
    let scan = r.scan_column;
    match task {
        Task::Spectrum(_) => {
            let mut t = Table::new(scan, &["level", "energy_per_kappa", "in_gap"]);
            for (v, p) in &r.points {
                let spec = single_excitation_spectrum(p)?;
                let half_gap = 0.5 * (p.t2.abs() - p.t1.abs()).abs();
                for (k, e) in spec.eigenvalues.iter().enumerate() {
                    let in_gap = (e - p.omega_a).abs() < half_gap;
                    t.push(*v, vec![k.to_string(), num(*e), in_gap.to_string()]);
                }
            }
            Ok(vec![("", t)])
        }
        Task::Winding(_) => {
            let mut t = Table::new(scan, &["winding"]);
            for (v, p) in &r.points {
                let w = match winding_number(p) {
                    Ok(w) => w.to_string(),
                    Err(Error::GapClosing(_)) => "undefined".into(),
                    Err(e) => return Err(e.into()),
                };
                t.push(*v, vec![w]);
            }
            Ok(vec![("", t)])
        }
        Task::EdgeProfile(_) => {
            let mut t = Table::new(scan, &["cavity", "chirality", "occupation", "energy_per_kappa"]);
            for (v, p) in &r.points {
                let e = edge_profile(p)?;
                for (m, occ) in e.modes.iter().zip(&e.occupation) {
                    t.push(*v, vec![m.cavity.to_string(), dir(m.chirality), num(*occ), num(e.energy)]);
                }
            }
            Ok(vec![("", t)])
        }
        Task::Evolve(task) => {
            let mut t = Table::new(
                scan,
                &["direction", "t_per_inv_kappa", "chi_t", "n_1_cw", "n_1_cw_std_err", "n_1_ccw", "n_1_ccw_std_err"],
            );
            for (v, p) in &r.points {
                for &d in &task.directions {
                    let traj = generate(p, d, &task.evolution, &task.truncation, seed, diags)?;
                    let (cw, ccw) = (&traj.observables[0], &traj.observables[1]);
                    for (k, &time) in traj.times.iter().enumerate() {
                        t.push(
                            *v,
                            vec![
                                dir(d),
                                num(time),
                                num(time * p.chi),
                                num(cw.values[k]),
                                num(cw.std_err[k]),
                                num(ccw.values[k]),
                                num(ccw.std_err[k]),
                            ],
                        );
                    }
                }
            }
            Ok(vec![("", t)])
        }
        Task::Wigner(task) => {
            let mut t = Table::new(scan, &["direction", "chi_t", "x", "p", "w"]);
            for (v, p) in &r.points {
                for &d in &task.directions {
                    let traj = generate(p, d, &task.evolution, &task.truncation, seed, diags)?;
                    let states = traj.reduced_states(ModeId::new(1, d)).expect("edge probes");
                    for &c in &task.at_chi_t {
                        let k = traj
                            .times
                            .iter()
                            .position(|&x| (x * p.chi - c).abs() < 1e-9 * c.abs().max(1.0))
                            .expect("validated sample");
                        let w = wigner(&states[k], &task.grid)?;
                        for i in 0..task.grid.nx {
                            for j in 0..task.grid.np {
                                let cells =
                                    vec![dir(d), num(c), num(task.grid.x(i)), num(task.grid.p(j)), num(w.get(i, j))];
                                t.push(*v, cells);
                            }
                        }
                    }
                }
            }
            Ok(vec![("", t)])
        }
        Task::Metrics(task) => {
            let mut t = Table::new(
                scan,
                &[
                    "direction",
                    "t_per_inv_kappa",
                    "chi_t",
                    "photons",
                    "negativity",
                    "macroscopicity",
                    "macroscopicity_error",
                    "fidelity",
                    "size",
                    "eta",
                    "beta",
                    "theta",
                    "fit_residual",
                    "fit_poor",
                    "coverage",
                ],
            );
            let mut rates = Table::new(scan, &["t_per_inv_kappa", "chi_t", "r_k", "r_f"]);
            for (v, p) in &r.points {
                let mut per_dir: Vec<(Chirality, Vec<f64>, Vec<ModeMetrics>)> = Vec::new();
                for &d in &task.directions {
                    let traj = generate(p, d, &task.evolution, &task.truncation, seed, diags)?;
                    let states: &[DensityOp] = traj.reduced_states(ModeId::new(1, d)).expect("edge probes");
                    let metrics = states
                        .iter()
                        .map(|rho| mode_metrics(rho, &task.grid, &task.fit))
                        .collect::<topocat::Result<Vec<_>>>()?;
                    for (time, m) in traj.times.iter().zip(&metrics) {
                        t.push(
                            *v,
                            vec![
                                dir(d),
                                num(*time),
                                num(time * p.chi),
                                num(m.photons),
                                num(m.negativity),
                                num(m.macroscopicity),
                                num(m.macroscopicity_error),
                                num(m.fidelity),
                                num(m.size),
                                num(m.fit.eta),
                                num(m.fit.beta),
                                num(m.fit.theta),
                                num(m.fit.residual),
                                m.fit.poor.to_string(),
                                num(m.coverage),
                            ],
                        );
                    }
                    per_dir.push((d, traj.times.clone(), metrics));
                }
                let cw = per_dir.iter().find(|x| x.0 == Chirality::Cw);
                let ccw = per_dir.iter().find(|x| x.0 == Chirality::Ccw);
                if let (Some(a), Some(b)) = (cw, ccw) {
                    for (k, time) in a.1.iter().enumerate() {
                        let (ma, mb) = (&a.2[k], &b.2[k]);
                        let (r_k, r_f) = match nonreciprocal_rates(ma.photons, mb.photons, ma.fidelity, mb.fidelity) {
                            Ok(x) => x,
                            Err(Error::ZeroDenominator(_)) => (f64::NAN, (ma.fidelity - mb.fidelity).abs()),
                            Err(e) => return Err(e.into()),
                        };
                        rates.push(*v, vec![num(*time), num(time * p.chi), num(r_k), num(r_f)]);
                    }
                }
            }
            let mut out = vec![("", t)];
            if !rates.rows.is_empty() {
                out.push(("rates", rates));
            }
            Ok(out)
        }
        Task::Excitation(task) => {
            let grid = task.delta.values().map_err(|m| Error::InvalidParameter(m))?;
            let mut t = Table::new(scan, &["direction", "delta_per_kappa", "n_driven", "n_other", "residual", "error"]);
            let mut rates = Table::new(scan, &["delta_per_kappa", "n_cw_drive", "n_ccw_drive", "r_k"]);
            for (v, p) in &r.points {
                let trunc = task.truncation.scheme(p);
                let mut curves = Vec::new();
                for &d in &task.directions {
                    let pts = excitation_spectrum(p, d, &trunc, &grid, &task.steady)?;
                    let worst = pts.iter().map(|x| x.residual).fold(0.0, f64::max);
                    let failed = pts.iter().filter(|x| x.error.is_some()).count();
                    diags.push(json!({ "scan": v, "direction": dir(d), "max_residual": worst, "failed_points": failed }));
                    for x in &pts {
                        let cells = vec![
                            dir(d),
                            num(x.delta),
                            num(x.n),
                            num(x.n_other),
                            num(x.residual),
                            x.error.clone().unwrap_or_default(),
                        ];
                        t.push(*v, cells);
                    }
                    curves.push((d, pts));
                }
                let cw = curves.iter().find(|c| c.0 == Chirality::Cw);
                let ccw = curves.iter().find(|c| c.0 == Chirality::Ccw);
                if let (Some(a), Some(b)) = (cw, ccw) {
                    for (x, y) in a.1.iter().zip(&b.1) {
                        let total = x.n + y.n;
                        let r_k = if total > 0.0 { (x.n - y.n).abs() / total } else { f64::NAN };
                        rates.push(*v, vec![num(x.delta), num(x.n), num(y.n), num(r_k)]);
                    }
                }
            }
            if !t.rows.is_empty() && t.rows.iter().all(|row| row.last().is_some_and(|e| !e.is_empty())) {
                return Err(Error::NoConvergence("every steady-state solve of the excitation spectrum failed".into()).into());
            }
            let mut out = vec![("", t)];
            if !rates.rows.is_empty() {
                out.push(("rates", rates));
            }
            Ok(out)
        }
        Task::Transmission(task) => {
            let grid = task.delta_p.values().map_err(|m| Error::InvalidParameter(m))?;
            let mut t = Table::new(scan, &["delta_p_per_kappa", "source", "t_cw", "t_ccw", "phase_cw", "phase_ccw"]);
            for (v, p) in &r.points {
                let linear = p.chi == 0.0 && p.chi_c == 0.0;
                for &dp in &grid {
                    if task.source != SourceChoice::Analytic {
                        let (a, b) = if linear {
                            let f = |d| -> topocat::Result<C64> {
                                Ok(1.0 - 2.0 * p.gamma_drive * qle_matrix(p, dp, d)?.edge_response()?)
                            };
                            (f(Chirality::Cw)?, f(Chirality::Ccw)?)
                        } else {
                            let trunc = task.truncation.scheme(p);
                            let f = |d| kerr_amplitude(p, dp, d, &trunc, &task.steady);
                            (f(Chirality::Cw)?, f(Chirality::Ccw)?)
                        };
                        t.push(*v, amplitude_row(dp, "numeric", a, b));
                    }
                    if task.source != SourceChoice::Numeric {
                        let (a, b, g) = analytic_amplitudes(p, dp)?;
                        if g.ambiguous {
                            diags.push(json!({ "scan": v, "delta_p": dp, "warning": "ambiguous Green's function branch" }));
                        }
                        t.push(*v, amplitude_row(dp, "analytic", a, b));
                    }
                }
            }
            Ok(vec![("", t)])
        }
    }
}

fn amplitude_row(dp: f64, source: &str, a: C64, b: C64) -> Vec<String> {
    vec![num(dp), source.into(), num(a.norm_sqr()), num(b.norm_sqr()), num(a.arg()), num(b.arg())]
}

fn generate(
    p: &ArrayParams,
    d: Chirality,
    evo: &Evolution,
    trunc: &Truncation,
    seed: u64,
    diags: &mut Vec<Value>,
) -> Result<Trajectory, RunError> {
    let p = ArrayParams { direction: d, ..p.clone() };
    let spec = evo.spec(p.chi, seed).map_err(Error::InvalidParameter)?;
    let (space, traj) = simulate_generation(&p, &trunc.scheme(&p), &spec)?;
    diags.push(json!({
        "direction": dir(d),
        "dimension": space.dim(),
        "method": spec.method.label(),
        "diagnostics": traj.diagnostics,
    }));
    if traj.diagnostics.positive == Some(false) {
        log::warn!("density matrix failed the positivity certificate ({d} injection)");
    }
    Ok(traj)
}
