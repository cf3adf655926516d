//! `metarkhs` — experiment harness for NTK meta-learning.
//!
//! Subcommands: train, evaluate, gradcheck, theorem-sweep, attack-sweep,
//! timing, expm-check. Runs are configured by a JSON document; CLI flags
//! override top-level fields and `METARKHS_OUTPUT_DIR` overrides the output
//! directory. Exit code 0 on success; failures print one machine-readable
//! JSON line on stderr.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use metarkhs_cli::commands;
use metarkhs_cli::config::{Algorithm, RunConfig};

const OUTPUT_DIR_ENV: &str = "METARKHS_OUTPUT_DIR";

#[derive(Parser)]
#[command(name = "metarkhs", version, about = "NTK meta-learning experiment harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// JSON run configuration; omitted = built-in defaults for the command.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory (also: METARKHS_OUTPUT_DIR).
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Override the algorithm.
    #[arg(long, value_enum)]
    algorithm: Option<Algorithm>,
    /// Override the meta-iteration count.
    #[arg(long)]
    meta_iterations: Option<usize>,
    /// Override the held-out evaluation task count.
    #[arg(long)]
    eval_tasks: Option<usize>,
    /// Override the worker-pool size.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Meta-train and write metrics.csv, timing.csv and checkpoint.json.
    Train(CommonArgs),
    /// Evaluate a checkpoint on held-out tasks (one row per ablation time
    /// for the ablation-t experiment).
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        /// Checkpoint produced by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Reverse-mode vs finite-difference gradient checks.
    Gradcheck(CommonArgs),
    /// Taylor-gap and energy-gap sweeps with their empirical assertions.
    TheoremSweep(CommonArgs),
    /// PGD robustness sweep over the configured epsilon grid.
    AttackSweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Optional trained checkpoint (defaults to the seed initialization).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Per-iteration timing ordinals and the closed-form solve scaling.
    Timing(CommonArgs),
    /// Padé approximant and matrix-exponential reference checks.
    ExpmCheck(CommonArgs),
}

fn default_config(command: &Command) -> &'static str {
    match command {
        Command::AttackSweep { .. } => {
            r#"{"experiment":"attack-sweep","algorithm":"meta-rkhs-2","tasks":{"kind":"blobs"},"eval_tasks":20}"#
        }
        Command::TheoremSweep(_) => r#"{"experiment":"theorem-sweep"}"#,
        Command::Gradcheck(_) => r#"{"experiment":"gradcheck"}"#,
        _ => r#"{"experiment":"sine-regression"}"#,
    }
}

fn load_config(common: &CommonArgs, command: &Command) -> Result<RunConfig, String> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path).map_err(|e| e.to_string())?,
        None => RunConfig::from_json(default_config(command)).map_err(|e| e.to_string())?,
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(algorithm) = common.algorithm {
        cfg.algorithm = algorithm;
    }
    if let Some(iters) = common.meta_iterations {
        cfg.meta_iterations = iters;
    }
    if let Some(eval_tasks) = common.eval_tasks {
        cfg.eval_tasks = eval_tasks;
    }
    if let Some(workers) = common.workers {
        cfg.workers = workers;
    }
    if let Ok(dir) = std::env::var(OUTPUT_DIR_ENV) {
        if !dir.is_empty() {
            cfg.output_dir = dir;
        }
    }
    if let Some(dir) = &common.output_dir {
        cfg.output_dir = dir.display().to_string();
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<bool, String> {
    let common = match &cli.command {
        Command::Train(c)
        | Command::Gradcheck(c)
        | Command::TheoremSweep(c)
        | Command::Timing(c)
        | Command::ExpmCheck(c) => c.clone(),
        Command::Evaluate { common, .. } | Command::AttackSweep { common, .. } => common.clone(),
    };
    let cfg = load_config(&common, &cli.command)?;
    let out_dir = Path::new(&cfg.output_dir).to_path_buf();
    let ok = match &cli.command {
        Command::Train(_) => commands::cmd_train(&cfg, &out_dir),
        Command::Evaluate { checkpoint, .. } => commands::cmd_evaluate(&cfg, checkpoint, &out_dir),
        Command::Gradcheck(_) => commands::cmd_gradcheck(&cfg, &out_dir),
        Command::TheoremSweep(_) => commands::cmd_theorem_sweep(&cfg, &out_dir),
        Command::AttackSweep { checkpoint, .. } => {
            commands::cmd_attack_sweep(&cfg, checkpoint.as_deref(), &out_dir)
        }
        Command::Timing(_) => commands::cmd_timing(&cfg, &out_dir),
        Command::ExpmCheck(_) => commands::cmd_expm_check(&cfg, &out_dir),
    }
    .map_err(|e| e.to_string())?;
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("{}", serde_json::json!({ "error": "one or more checks failed" }));
            ExitCode::from(1)
        }
        Err(message) => {
            eprintln!("{}", serde_json::json!({ "error": message }));
            ExitCode::from(2)
        }
    }
}
