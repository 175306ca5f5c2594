//! End-to-end checks of the `topocat` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};
use topocat_cli::{bundled, scenario};

fn topocat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_topocat")).args(args).output().unwrap()
}

/// Fresh scratch directory per test.
fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("topocat-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

/// The JSON error object is the last line on stderr; log lines may precede it.
fn stderr_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.lines().last().unwrap_or_default()).unwrap()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

const SMALL_TRAJECTORIES: &str = r#"
name = "small_trajectories"
seed = 7
[params]
n_cavities = 2
t1 = 0.6
t2 = 1.5
chi = 1.0
kappa = 0.4
alpha0 = 1.0
[[output]]
kind = "evolve"
directions = ["cw"]
evolution = { chi_t_final = 0.6, chi_t_stride = 0.2, method = "trajectories", n_traj = 20 }
truncation = { edge = 5, bulk = 2 }
"#;

#[test]
fn every_bundled_scenario_validates() {
    let out = topocat(&["list"]);
    assert!(out.status.success());
    let listed = String::from_utf8(out.stdout).unwrap();
    assert!(listed.lines().any(|l| l == "fig1d_winding"));
    for name in bundled::names() {
        let s = scenario::parse(bundled::get(name).unwrap()).unwrap();
        assert_eq!(s.name, name);
        scenario::validate(&s).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn wigner_scenario_carries_the_generation_parameters() {
    let s = scenario::parse(bundled::get("fig3_wigner_evolution").unwrap()).unwrap();
    assert_eq!((s.params.t1, s.params.t2), (0.4, 8.0));
    assert!((s.params.chi - 2.0 * std::f64::consts::PI).abs() < 1e-12);
    assert_eq!(s.params.alpha0, 2.0);
}

#[test]
fn malformed_scenario_exits_with_validation_error() {
    let dir = scratch("empty");
    let path = dir.join("empty.toml");
    std::fs::write(&path, "").unwrap();
    for verb in ["validate", "run"] {
        let out = topocat(&[verb, path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(2), "{verb}");
        let err = stderr_json(&out);
        assert_eq!(err["error"], "validation");
    }
}

#[test]
fn winding_run_writes_the_step_and_checksums() {
    let dir = scratch("winding");
    let out = topocat(&["run", "fig1d_winding", "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(&dir);
    assert_eq!(m["status"], "ok");
    let files = m["files"].as_array().unwrap();
    assert!(!files.is_empty());
    for f in files {
        let bytes = std::fs::read(dir.join(f["file"].as_str().unwrap())).unwrap();
        assert_eq!(format!("{:x}", Sha256::digest(&bytes)), f["sha256"].as_str().unwrap());
    }
    let mut rdr = csv::Reader::from_path(dir.join(files[0]["file"].as_str().unwrap())).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let (ix, iw) = (headers.iter().position(|h| h == "t1_over_t2").unwrap(), headers.iter().position(|h| h == "winding").unwrap());
    for row in rdr.records() {
        let row = row.unwrap();
        let r: f64 = row[ix].parse().unwrap();
        let want = if (r - 1.0).abs() < 1e-12 {
            "undefined"
        } else if r < 1.0 {
            "1"
        } else {
            "0"
        };
        assert_eq!(&row[iw], want, "t1/t2 = {r}");
    }
}

#[test]
fn equal_seeds_give_identical_tables() {
    let dir = scratch("seeds");
    let path = dir.join("s.toml");
    std::fs::write(&path, SMALL_TRAJECTORIES).unwrap();
    let run = |sub: &str| {
        let out_dir = dir.join(sub);
        let out = topocat(&["run", path.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let m = manifest(&out_dir);
        m["files"].as_array().unwrap().iter().map(|f| std::fs::read(out_dir.join(f["file"].as_str().unwrap())).unwrap()).collect::<Vec<_>>()
    };
    let (a, b) = (run("a"), run("b"));
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn numerical_failure_exits_three_with_manifest() {
    // no loss at all and a probe on resonance: the QLE matrix is zero
    let dir = scratch("singular");
    let path = dir.join("s.toml");
    std::fs::write(
        &path,
        "name = \"singular\"\n[params]\nkappa = 0.0\ngamma_drive = 0.0\neps = 0.1\n[[output]]\nkind = \"transmission\"\nsource = \"numeric\"\ndelta_p = [0.0]\n",
    )
    .unwrap();
    let out_dir = dir.join("out");
    let out = topocat(&["run", path.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "numerical");
    let m = manifest(&out_dir);
    assert_eq!(m["status"], "failed");
    assert_eq!(m["failure"]["class"], "numerical");
}

#[test]
fn bad_worker_count_is_rejected() {
    let out = Command::new(env!("CARGO_BIN_EXE_topocat")).arg("list").env("TOPOCAT_WORKERS", "zero").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
