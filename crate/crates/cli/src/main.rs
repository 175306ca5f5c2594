use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use topocat_cli::runner::{self, EXIT_IO, EXIT_VALIDATION};
use topocat_cli::{bundled, scenario};

/// Worker-pool size; defaults to the number of logical CPUs.
const WORKERS_ENV: &str = "TOPOCAT_WORKERS";

#[derive(Parser)]
#[command(name = "topocat", about = "Nonreciprocal Kerr-cat generation in a topological cavity array")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file or a bundled scenario by name.
    Run {
        scenario: String,
        /// Output directory; overrides the scenario's `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List bundled scenarios.
    List,
    /// Parse and check a scenario without running it.
    Validate { scenario: String },
    /// Print the tool version.
    Version,
}

fn load(arg: &str) -> Result<String, String> {
    let path = PathBuf::from(arg);
    if path.exists() {
        return std::fs::read_to_string(&path).map_err(|e| format!("{arg}: {e}"));
    }
    bundled::get(arg).map(String::from).ok_or_else(|| format!("{arg}: no such file or bundled scenario"))
}

fn fail(code: i32, err: serde_json::Value) -> ExitCode {
    eprintln!("{err}");
    ExitCode::from(code as u8)
}

fn setup_workers() -> Result<(), String> {
    let Ok(v) = std::env::var(WORKERS_ENV) else { return Ok(()) };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or(format!("{WORKERS_ENV}={v:?} is not a positive integer"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(m) = setup_workers() {
        return fail(EXIT_VALIDATION, runner::validation_error(&m));
    }
    match cli.command {
        Command::Version => {
            println!("topocat {}", env!("CARGO_PKG_VERSION"));
            ExitCode::SUCCESS
        }
        Command::List => {
            for name in bundled::names() {
                println!("{name}");
            }
            ExitCode::SUCCESS
        }
        Command::Validate { scenario: arg } => {
            let checked = load(&arg).and_then(|t| scenario::parse(&t)).and_then(|s| scenario::validate(&s).map(|r| (s, r)));
            match checked {
                Ok((s, r)) => {
                    let points: usize = r.iter().map(|o| o.points.len()).sum();
                    println!("{}: ok ({} outputs, {points} parameter points)", s.name, r.len());
                    ExitCode::SUCCESS
                }
                Err(m) => fail(EXIT_VALIDATION, runner::validation_error(&m)),
            }
        }
        Command::Run { scenario: arg, out } => {
            let s = match load(&arg).and_then(|t| scenario::parse(&t)) {
                Ok(s) => s,
                Err(m) => return fail(EXIT_VALIDATION, runner::validation_error(&m)),
            };
            let dir = out.unwrap_or_else(|| runner::default_output_dir(&s));
            let outcome = runner::run(&s, &dir);
            if let Some(m) = &outcome.manifest {
                println!("{}: {} ({} files in {}, {:.1} s)", s.name, m.status, m.files.len(), dir.display(), m.wall_clock_s);
            }
            match outcome.error {
                Some(e) => fail(if outcome.exit_code == 0 { EXIT_IO } else { outcome.exit_code }, e),
                None => ExitCode::from(outcome.exit_code as u8),
            }
        }
    }
}
