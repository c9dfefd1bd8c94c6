use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use log::info;
use rwre_lab::acceptance;
use rwre_lab::config::{Experiment, ExperimentConfig};
use rwre_lab::diag::{LabError, LabResult, EXIT_INDETERMINATE, EXIT_OK};
use rwre_lab::run::{execute_with_jobs, resolve_out_dir, write_artifacts};
use serde_json::json;

/// Exit code of `reproduce` when a criterion fails.
const EXIT_FAILED: i32 = 1;

#[derive(Parser)]
#[command(
    name = "rwre-lab",
    version,
    about = "Run random-walk-in-random-environment experiments from JSON configs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a config and write report.json, manifest.json and CSV curves.
    Run {
        #[command(flatten)]
        config: ConfigArg,
        /// Overrides the master seed of the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; results do not depend on it.
        #[arg(long)]
        jobs: Option<usize>,
        /// Output directory (otherwise $RWRE_LAB_OUT, the config, or ./rwre-out).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Validate and check feasibility without running.
        #[arg(long)]
        check: bool,
    },
    /// Validate a config and check its feasibility.
    Check {
        #[command(flatten)]
        config: ConfigArg,
    },
    /// List experiment kinds and acceptance ids.
    List,
    /// Run the pinned acceptance criteria.
    Reproduce {
        /// A criterion id such as A3, or `all`.
        #[arg(default_value = "all")]
        id: String,
        /// Print the results as JSON instead of one line per criterion.
        #[arg(long)]
        json: bool,
    },
}

/// A config path given either as `--config FILE` or positionally.
#[derive(clap::Args)]
struct ConfigArg {
    #[arg(long = "config", value_name = "FILE")]
    flag: Option<PathBuf>,
    #[arg(value_name = "CONFIG", conflicts_with = "flag")]
    positional: Option<PathBuf>,
}

impl ConfigArg {
    fn path(self) -> LabResult<PathBuf> {
        self.flag
            .or(self.positional)
            .ok_or_else(|| LabError::Config("no config file given; pass --config FILE".into()))
    }
}

fn load(config: ConfigArg, seed: Option<u64>) -> LabResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&config.path()?)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn run(cli: Cli) -> LabResult<i32> {
    match cli.command {
        Command::Run {
            config,
            seed,
            jobs,
            out,
            check,
        } => {
            let cfg = load(config, seed)?;
            if check {
                println!(
                    "{}",
                    json!({"status": "ok", "experiment": cfg.experiment.kind(), "config_hash": cfg.hash()})
                );
                return Ok(EXIT_OK);
            }
            let jobs = jobs.or(cfg.jobs).unwrap_or_else(default_jobs);
            let dir = resolve_out_dir(out.as_deref(), cfg.output.dir.as_deref());
            info!("running {} with seed {} on {jobs} threads", cfg.experiment.kind(), cfg.seed);
            let started = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
            let t0 = Instant::now();
            let outcome = execute_with_jobs(&cfg, jobs)?;
            let manifest = write_artifacts(&dir, &cfg, &outcome, jobs, started, t0.elapsed().as_secs_f64())?;
            println!(
                "{}",
                json!({
                    "status": if outcome.indeterminate.is_empty() { "ok" } else { "indeterminate" },
                    "out_dir": dir,
                    "report_hash": manifest.report_hash,
                    "indeterminate": outcome.indeterminate,
                })
            );
            if outcome.indeterminate.is_empty() {
                Ok(EXIT_OK)
            } else {
                let e = LabError::Indeterminate(format!("verdicts left open: {}", outcome.indeterminate.join(", ")));
                eprintln!("{}", e.diagnostic());
                Ok(EXIT_INDETERMINATE)
            }
        }
        Command::Check { config } => {
            let cfg = load(config, None)?;
            println!(
                "{}",
                json!({"status": "ok", "experiment": cfg.experiment.kind(), "config_hash": cfg.hash()})
            );
            Ok(EXIT_OK)
        }
        Command::List => {
            println!("experiments: {}", Experiment::KINDS.join(", "));
            println!("acceptance: {}, all", acceptance::IDS.join(", "));
            Ok(EXIT_OK)
        }
        Command::Reproduce { id, json } => {
            let results = acceptance::run_selection(&id)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&results)?);
            } else {
                for r in &results {
                    println!("{}", r.line());
                }
            }
            Ok(if results.iter().all(|r| r.passed) { EXIT_OK } else { EXIT_FAILED })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", e.diagnostic());
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
