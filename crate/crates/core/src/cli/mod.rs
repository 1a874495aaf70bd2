//! Command-line driver: config ingestion, orchestration and report emission.
//!
//! Reports are JSON with sorted keys. Everything outside the `meta` object
//! depends only on the config and the seed, so reruns are byte-identical
//! apart from `meta`, which holds timings and the timestamp.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use crate::{Error, Result};
pub use config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "curlbound", version, about = "Guaranteed error bounds for curl-curl problems on voxel grids")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the discrete problem and report solver statistics.
    Solve(CommonArgs),
    /// Compute the majorant and minorant for an approximation.
    Bound(CommonArgs),
    /// Compute the Poincaré constant and the Dirichlet fields.
    Eigs(CommonArgs),
    /// Split a field into gradient, harmonic and curl-range parts.
    Decompose(CommonArgs),
    /// Run a refinement study and emit one CSV row per grid.
    Study(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Cross-check against dense computations on small grids.
    #[arg(long)]
    pub oracle: bool,
    /// Worker threads for study rows.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Overrides every seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Solve(_) => "solve",
            Command::Bound(_) => "bound",
            Command::Eigs(_) => "eigs",
            Command::Decompose(_) => "decompose",
            Command::Study(_) => "study",
        }
    }

    fn args(&self) -> &CommonArgs {
        match self {
            Command::Solve(a) | Command::Bound(a) | Command::Eigs(a) | Command::Decompose(a) | Command::Study(a) => a,
        }
    }
}

/// Wall-clock phases, reported under `meta.timings`.
#[derive(Debug, Default)]
pub struct Timings {
    phases: Vec<(String, f64)>,
}

impl Timings {
    pub fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.record(phase, t.elapsed().as_secs_f64());
        out
    }

    pub fn record(&mut self, phase: &str, secs: f64) {
        self.phases.push((phase.to_string(), secs));
    }

    fn to_json(&self) -> Value {
        Value::Object(self.phases.iter().map(|(k, v)| (k.clone(), json!(v))).collect())
    }
}

/// Deterministic body of a report plus its timings.
pub struct Outcome {
    pub body: Map<String, Value>,
    pub status: &'static str,
    pub timings: Timings,
}

/// Short machine-readable name of an error.
pub fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidGrid(_) => "invalid_grid",
        Error::InvalidInput(_) => "invalid_input",
        Error::DegreeMismatch { .. } => "degree_mismatch",
        Error::LengthMismatch { .. } => "length_mismatch",
        Error::NotTangentialZero => "not_tangential_zero",
        Error::Singular(_) => "singular",
        Error::NotPositiveDefinite(_) => "not_positive_definite",
        Error::NotConverged { .. } => "not_converged",
        Error::TopologyUndecided { .. } => "topology_undecided",
        Error::VariantMismatch { .. } => "variant_mismatch",
        Error::SizeLimit { .. } => "size_limit",
        Error::Config(_) => "config",
        Error::Io { .. } => "io",
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numeric() {
        EXIT_NUMERIC
    } else {
        EXIT_CONFIG
    }
}

fn write_report(path: &Path, command: &str, cfg: &RunConfig, outcome: Outcome) -> Result<()> {
    let mut doc = outcome.body;
    doc.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    doc.insert("command".into(), json!(command));
    doc.insert("status".into(), json!(outcome.status));
    doc.insert("config".into(), serde_json::to_value(cfg).expect("config serializes"));
    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    doc.insert(
        "meta".into(),
        json!({ "timestamp_unix": timestamp, "timings": outcome.timings.to_json() }),
    );
    let text = serde_json::to_string_pretty(&Value::Object(doc)).expect("report serializes") + "\n";
    write_text(path, &text)
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.display().to_string(),
            source,
        })?;
    }
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn dispatch(command: &Command, cfg: &RunConfig) -> Result<Outcome> {
    let oracle = command.args().oracle;
    match command {
        Command::Solve(_) => commands::cmd_solve(cfg, oracle),
        Command::Bound(_) => commands::cmd_bound(cfg, oracle),
        Command::Eigs(_) => commands::cmd_eigs(cfg, oracle),
        Command::Decompose(_) => commands::cmd_decompose(cfg, oracle),
        Command::Study(_) => commands::cmd_study(cfg),
    }
}

/// Runs a parsed command and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let args = cli.command.args();
    let mut cfg = match RunConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    if let Some(seed) = args.seed {
        cfg.override_seed(seed);
    }
    let outcome = match args.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli.command, &cfg)),
            Err(e) => Err(Error::Config(format!("--threads {n}: {e}"))),
        },
        None => dispatch(&cli.command, &cfg),
    };
    let name = cli.command.name();
    match outcome {
        Ok(o) => {
            let status = o.status;
            if let Err(e) = write_report(&cfg.outputs.report, name, &cfg, o) {
                eprintln!("error: {e}");
                return EXIT_CONFIG;
            }
            if status == "failed" {
                EXIT_NUMERIC
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            let code = exit_code(&e);
            if code == EXIT_NUMERIC {
                let mut body = Map::new();
                body.insert("error".into(), json!({ "kind": error_kind(&e), "message": e.to_string() }));
                let failed = Outcome {
                    body,
                    status: "failed",
                    timings: Timings::default(),
                };
                if let Err(w) = write_report(&cfg.outputs.report, name, &cfg, failed) {
                    eprintln!("error: {w}");
                }
            }
            code
        }
    }
}

/// Parses process arguments and runs; help and version exit with 0,
/// malformed arguments with the config error code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            code
        }
    }
}
