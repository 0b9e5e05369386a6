//! Command-line front end: one subcommand per experiment, plus `run` (reads
//! the experiment name from the config) and `sweep`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use cocycle_lab::experiments::{self, error_json, exit_code, render_csv, render_report, Config, Experiment, Meta};
use cocycle_lab::jacobi::Ensemble;
use cocycle_lab::LabError;
use serde_json::Value;

#[derive(Parser)]
#[command(name = "cocycle-lab", version, about = "Experiments on i.i.d. products of random 2x2 matrices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to the config value, then to all cores.
    #[arg(long)]
    workers: Option<usize>,
    /// CSV destination; the JSON report goes next to it with a `.json` extension.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo Lyapunov exponent.
    Le(Common),
    /// Large-deviation tails over a list of scales.
    Ldt(Common),
    /// Irreducibility measurements of `cocycle` against `base`.
    Irred(Common),
    /// Nested-cone escape experiment.
    Prison(Common),
    /// Avalanche Principle residuals on sampled chains.
    Ap(Common),
    /// Block-to-scale bridging through the Avalanche Principle.
    Bridge(Common),
    /// Stationary measure of the discretized projective operator.
    Transfer(Common),
    /// Pressure curve of the Laplace-transform operator.
    Pressure(Common),
    /// Integrated density of states.
    Ids {
        #[command(flatten)]
        common: Common,
        /// Use the free operator instead of the config ensemble.
        #[arg(long)]
        free: bool,
    },
    /// Thouless formula check.
    Thouless(Common),
    /// Alternating-weight toy operator diagnostics.
    Toy(Common),
    /// Experiment named by the config's `experiment` field.
    Run(Common),
    /// Repeat an experiment over values of one config parameter.
    Sweep {
        /// Experiment to repeat.
        experiment: String,
        #[command(flatten)]
        common: Common,
        /// Dotted config path, e.g. `cocycle.eta`.
        #[arg(long)]
        param: String,
        /// Comma-separated JSON values.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Vec<String>,
    },
}

fn load(common: &Common) -> Result<Config, LabError> {
    let mut cfg = match &common.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| LabError::ConfigInvalid(format!("cannot read {}: {e}", p.display())))?;
            Config::from_json(&text)?
        }
        None => Config::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = Some(s);
    }
    if let Some(w) = common.workers {
        cfg.workers = Some(w);
    }
    if let Some(o) = &common.out {
        cfg.out = Some(o.display().to_string());
    }
    if cfg.workers == Some(0) {
        return Err(LabError::ConfigInvalid("workers must be positive".into()));
    }
    Ok(cfg)
}

fn report_path(out: &Path) -> PathBuf {
    out.with_extension("json")
}

type Job = Box<dyn FnOnce(&Config, u64) -> Result<experiments::RunOutput, LabError> + Send>;

/// Io failures count as internal errors.
enum Failure {
    Lab(LabError),
    Io(String),
}

impl From<LabError> for Failure {
    fn from(e: LabError) -> Self {
        Failure::Lab(e)
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let (common, job): (Common, Job) = match cli.command {
        Command::Run(c) => (
            c,
            Box::new(|cfg, seed| {
                let e = cfg.experiment.ok_or_else(|| LabError::ConfigInvalid("config has no `experiment`".into()))?;
                experiments::run(e, cfg, seed)
            }),
        ),
        Command::Sweep { experiment, common, param, values } => {
            let e: Experiment = experiment.parse()?;
            let values = values
                .iter()
                .map(|v| {
                    serde_json::from_str::<Value>(v)
                        .map_err(|err| LabError::ConfigInvalid(format!("value {v:?}: {err}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            (common, Box::new(move |cfg, seed| experiments::sweep(e, cfg, &param, &values, seed)))
        }
        Command::Ids { common, free } => (
            common,
            Box::new(move |cfg: &Config, seed| {
                let mut cfg = cfg.clone();
                if free {
                    cfg.ensemble = Some(Ensemble::Free);
                }
                experiments::run(Experiment::Ids, &cfg, seed)
            }),
        ),
        other => {
            let (c, e) = match other {
                Command::Le(c) => (c, Experiment::Le),
                Command::Ldt(c) => (c, Experiment::Ldt),
                Command::Irred(c) => (c, Experiment::Irred),
                Command::Prison(c) => (c, Experiment::Prison),
                Command::Ap(c) => (c, Experiment::Ap),
                Command::Bridge(c) => (c, Experiment::Bridge),
                Command::Transfer(c) => (c, Experiment::Transfer),
                Command::Pressure(c) => (c, Experiment::Pressure),
                Command::Thouless(c) => (c, Experiment::Thouless),
                Command::Toy(c) => (c, Experiment::Toy),
                Command::Run(_) | Command::Sweep { .. } | Command::Ids { .. } => unreachable!(),
            };
            (c, Box::new(move |cfg, seed| experiments::run(e, cfg, seed)))
        }
    };
    let cfg = load(&common)?;
    let seed = cfg.seed.unwrap_or(0);
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cfg.workers {
        pool = pool.num_threads(w);
    }
    let pool = pool.build().map_err(|e| Failure::Io(e.to_string()))?;
    let output = pool.install(|| job(&cfg, seed))?;

    let meta = Meta::new(output.experiment.name(), &cfg, seed, started);
    let csv = render_csv(&meta, &output.table);
    match &cfg.out {
        Some(out) => {
            let out = PathBuf::from(out);
            std::fs::write(&out, csv).map_err(|e| Failure::Io(format!("{}: {e}", out.display())))?;
            let rp = report_path(&out);
            std::fs::write(&rp, render_report(&meta, &output.report))
                .map_err(|e| Failure::Io(format!("{}: {e}", rp.display())))?;
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Lab(e)) => {
            eprintln!("{}", error_json(&e));
            ExitCode::from(exit_code(&e) as u8)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("{}", serde_json::json!({ "error": "Io", "message": msg, "exit_code": 1 }));
            ExitCode::from(1)
        }
    }
}
