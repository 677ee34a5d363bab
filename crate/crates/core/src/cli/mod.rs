//! Config-driven experiment runner behind the `trotter-shuffle` binary.

mod config;
mod report;
mod run;

use std::io::Write;
use std::path::PathBuf;

use clap::Parser;

pub use config::{EvolutionParams, ExperimentConfig, Generator, Kind, SigmaMode, WordParams};
pub use report::{emit, load_sidecar_config, quantile, sidecar_path, Cell, ExperimentReport, Record, SummaryRow, SCHEMA_VERSION};
pub use run::run;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) | CliError::Io { .. } => 3,
        }
    }
}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        match e {
            crate::Error::InfeasibleRegime(_) => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "trotter-shuffle", version, about = "Randomly permuted Lie-Trotter product experiments")]
pub struct Args {
    /// Experiment kind.
    #[arg(value_enum)]
    pub kind: Kind,
    /// JSON config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Row lengths, comma separated (overrides n_list).
    #[arg(long, value_delimiter = ',')]
    pub n: Vec<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long, value_enum)]
    pub sigma: Option<SigmaMode>,
    /// Output CSV; the sidecar goes next to it with a .json extension.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Reads the config file (if any), applies command-line overrides, and
/// validates the result.
pub fn load_config(args: &Args) -> Result<ExperimentConfig, CliError> {
    let mut value = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => serde_json::json!({}),
    };
    let obj = value
        .as_object_mut()
        .ok_or_else(|| CliError::Config("config must be a JSON object".into()))?;
    let kind = serde_json::to_value(args.kind).expect("kind serializes");
    match obj.get("kind") {
        Some(k) if *k != kind => {
            return Err(CliError::Config(format!("kind: config says {k}, command line says {kind}")));
        }
        _ => {
            obj.insert("kind".into(), kind);
        }
    }
    let mut set = |key: &str, v: serde_json::Value| {
        obj.insert(key.to_string(), v);
    };
    if !args.n.is_empty() {
        set("n_list", serde_json::json!(args.n));
    }
    if let Some(d) = args.d {
        set("d", d.into());
    }
    if let Some(t) = args.trials {
        set("trials", t.into());
    }
    if let Some(s) = args.seed {
        set("seed", s.into());
    }
    if let Some(e) = args.eps {
        set("eps", e.into());
    }
    if let Some(s) = args.sigma {
        set("sigma_mode", serde_json::to_value(s).expect("sigma serializes"));
    }
    if let Some(o) = &args.out {
        set("out_path", serde_json::json!(o));
    }
    let cfg: ExperimentConfig = serde_json::from_value(value).map_err(|e| CliError::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Runs one invocation and returns the process exit code.
pub fn execute(args: &Args) -> i32 {
    let result = load_config(args).and_then(|cfg| {
        let report = run(&cfg)?;
        match &cfg.out_path {
            Some(out) => emit(&report, out)?,
            None => std::io::stdout()
                .write_all(&report.to_csv()?)
                .map_err(|e| CliError::Runtime(format!("stdout: {e}")))?,
        }
        Ok(report)
    });
    match result {
        Ok(report) => {
            for s in &report.summary {
                eprintln!(
                    "n={:<8} {:<18} median={:<12.6e} p05={:<12.6e} p95={:.6e}",
                    s.n, s.metric, s.median, s.p05, s.p95
                );
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
