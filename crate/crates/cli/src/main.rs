use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use cacto_cli::{config::RunConfig, SolveRequest, WarmStart};
use cacto_core::EnvKind;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cacto", version, about = "Train and evaluate TO-guided actor-critic policies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Global seed (overrides `seed` in the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for episode generation and grid evaluation.
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Train actor and critic.
    Train(Common),
    /// Compare warm starts over a grid of initial positions.
    EvalGrid {
        #[command(flatten)]
        common: Common,
        /// Actor checkpoint written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Check the tabular algorithm against value iteration.
    TabularVerify(Common),
    /// Run one trajectory optimisation and print the report.
    ToSolve {
        #[command(flatten)]
        common: Common,
        /// System; overrides `env.kind` and resets the env section to its defaults.
        #[arg(long)]
        env: Option<EnvKind>,
        /// Initial state without the time component, comma separated.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        x0: Vec<f64>,
        /// Initial time step.
        #[arg(long, default_value_t = 0)]
        t0: usize,
        #[arg(long, value_enum, default_value_t = WarmStart::Ics)]
        warm_start: WarmStart,
        /// Actor checkpoint for `--warm-start policy`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

fn resolve(common: &Common, env: Option<EnvKind>) -> Result<RunConfig> {
    let mut cfg = match (&common.config, env) {
        (Some(path), None) => RunConfig::load(path)?,
        (Some(path), Some(kind)) => {
            let cfg = RunConfig::load(path)?;
            if cfg.env.kind != kind {
                bail!("--env {kind} conflicts with env.kind = {} in {}", cfg.env.kind, path.display());
            }
            cfg
        }
        (None, kind) => RunConfig::defaults(kind.unwrap_or(EnvKind::DoubleIntegrator)),
    };
    if let Some(seed) = common.seed {
        cfg.set_seed(seed);
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Train(common) => {
            let cfg = resolve(&common, None)?;
            cacto_cli::cmd_train(&cfg, common.workers, &mut out)
        }
        Command::EvalGrid { common, checkpoint } => {
            let cfg = resolve(&common, None)?;
            cacto_cli::cmd_eval_grid(&cfg, &checkpoint, common.workers, &mut out).map(drop)
        }
        Command::TabularVerify(common) => {
            let cfg = resolve(&common, None)?;
            cacto_cli::cmd_tabular_verify(&cfg, &mut out).map(drop)
        }
        Command::ToSolve { common, env, x0, t0, warm_start, checkpoint } => {
            let cfg = resolve(&common, env)?;
            let req = SolveRequest { x0, t0, warm_start, checkpoint };
            cacto_cli::cmd_to_solve(&cfg, &req, &mut out).map(drop)
        }
    }?;
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(cacto_cli::exit_code(&e) as u8)
        }
    }
}
