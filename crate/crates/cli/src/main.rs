//! `vhetnet`: experiment runner and report generator.
//!
//! Every failure prints one JSON object on stderr and exits nonzero: 2 for
//! invalid input (configuration, flags, parse errors), 1 otherwise.

mod report;
mod run;
mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use vhetnet::config::{EstimatorKind, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "vhetnet",
    version,
    about = "Sleeping-cell estimation and renewable-aware cell switching"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment file (TOML). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the run seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `out` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Dist,
    Mlc,
    Lstm,
    Oracle,
}

impl From<EstimatorArg> for EstimatorKind {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::Dist => EstimatorKind::Dist,
            EstimatorArg::Mlc => EstimatorKind::Mlc,
            EstimatorArg::Lstm => EstimatorKind::Lstm,
            EstimatorArg::Oracle => EstimatorKind::Oracle,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Writes a synthetic trace (CDR schema) and the matching network file.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo comparison of sleeping-cell estimators.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trials: Option<usize>,
        /// Restricts the sweep to one estimator family.
        #[arg(long, value_enum)]
        estimator: Option<EstimatorArg>,
    },
    /// Cell switching over a timeline, with a no-renewable baseline.
    Switch {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long, value_enum)]
        estimator: Option<EstimatorArg>,
        /// Also sweep solar fraction and gamma.
        #[arg(long)]
        sweep: bool,
    },
    /// Aggregates run directories into summary.csv and a chart.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
}

/// A failure reported as machine-readable JSON.
#[derive(Debug)]
pub struct Failure {
    kind: &'static str,
    field: Option<String>,
    path: Option<PathBuf>,
    message: String,
}

impl Failure {
    pub fn usage(field: &str, message: impl Into<String>) -> Self {
        Failure {
            kind: "usage",
            field: Some(field.into()),
            path: None,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Failure {
            kind: "io",
            field: None,
            path: Some(path.into()),
            message: e.to_string(),
        }
    }

    pub fn csv(path: &Path, e: csv::Error) -> Self {
        Failure {
            kind: "parse",
            field: None,
            path: Some(path.into()),
            message: e.to_string(),
        }
    }

    pub fn parse(path: &Path, message: impl Into<String>) -> Self {
        Failure {
            kind: "parse",
            field: None,
            path: Some(path.into()),
            message: message.into(),
        }
    }

    fn exit_code(&self) -> u8 {
        match self.kind {
            "config" | "usage" | "parse" => 2,
            _ => 1,
        }
    }

    fn to_json(&self) -> String {
        let mut obj = serde_json::Map::new();
        obj.insert("error".into(), self.kind.into());
        if let Some(f) = &self.field {
            obj.insert("field".into(), f.as_str().into());
        }
        if let Some(p) = &self.path {
            obj.insert("path".into(), p.display().to_string().into());
        }
        obj.insert("message".into(), self.message.as_str().into());
        serde_json::Value::Object(obj).to_string()
    }
}

impl From<vhetnet::Error> for Failure {
    fn from(e: vhetnet::Error) -> Self {
        use vhetnet::Error as E;
        let message = e.to_string();
        let (kind, field, path) = match e {
            E::Config { field, msg } => {
                return Failure {
                    kind: "config",
                    field: Some(field),
                    path: None,
                    message: msg,
                }
            }
            E::Parse { path, .. } => ("parse", None, Some(path)),
            E::Io { path, .. } => ("io", None, Some(path)),
            E::SearchCap { .. } => ("search_cap", Some("switch.search_cap".to_string()), None),
            E::Domain(_) | E::NotFound(_) | E::Size(_) => ("domain", None, None),
            E::EmptyTrace => ("empty_trace", None, None),
            E::Estimation(_) => ("estimation", None, None),
            E::Numeric { .. } | E::Divergence { .. } => ("numeric", None, None),
        };
        Failure {
            kind,
            field,
            path,
            message,
        }
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out = o.clone();
    }
    Ok(cfg)
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("VHETNET_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|n| *n >= 1).ok_or_else(|| {
        Failure::usage(
            "VHETNET_THREADS",
            format!("`{v}` is not a positive integer"),
        )
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::usage("VHETNET_THREADS", e.to_string()))
}

fn execute(cli: Cli) -> Result<Vec<PathBuf>, Failure> {
    configure_threads()?;
    let mut log = std::io::stderr();
    match cli.command {
        Command::Synth { common } => {
            let cfg = load_config(&common)?;
            run::synth(&cfg, common.seed, &cfg.out)
        }
        Command::Estimate {
            common,
            trials,
            estimator,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(t) = trials {
                cfg.trials = t;
            }
            cfg.validate()?;
            run::estimate(&cfg, estimator.map(Into::into), &cfg.out, &mut log)
        }
        Command::Switch {
            common,
            gamma,
            estimator,
            sweep,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(g) = gamma {
                cfg.gamma = g;
            }
            if let Some(e) = estimator {
                cfg.estimator = e.into();
            }
            cfg.validate()?;
            run::switch(&cfg, sweep, &cfg.out, &mut log)
        }
        Command::Report { runs, out } => {
            let outcome = report::report(&runs, &out)?;
            for (dir, missing) in &outcome.skipped {
                eprintln!("skipped {}: missing {}", dir.display(), missing.join(", "));
            }
            Ok(outcome.written)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let f = Failure::usage("arguments", e.to_string().trim().to_string());
            eprintln!("{}", f.to_json());
            return ExitCode::from(f.exit_code());
        }
    };
    match execute(cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("{}", f.to_json());
            ExitCode::from(f.exit_code())
        }
    }
}
