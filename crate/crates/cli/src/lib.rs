//! Command implementations behind the `cacto` binary.

pub mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cacto_core::bench::{self, GridEvalResult, RegionStats};
use cacto_core::cacto::{self as algo, EpisodeLog};
use cacto_core::nn::{self, load_actor, Normalizer};
use cacto_core::tabular::{self, GridMdp, LocalSearch, VerifyRecord};
use cacto_core::trajopt::{self, warm_start, DEFAULT_DETOUR};
use cacto_core::{ControlProblem, EnvKind, Error, SolveReport, State};
use serde::Serialize;

pub use config::RunConfig;

pub const TRAIN_LOG: &str = "train_log.csv";
pub const TIMING: &str = "timing.csv";
pub const ACTOR_CHECKPOINT: &str = "actor.ckpt";
pub const CRITIC_CHECKPOINT: &str = "critic.ckpt";
pub const TARGET_CRITIC_CHECKPOINT: &str = "target_critic.ckpt";
pub const STATS: &str = "stats.toml";

/// A run that completed but failed its numeric check.
#[derive(Debug)]
pub struct NumericFailure(pub String);

impl std::fmt::Display for NumericFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericFailure {}

/// 2 for numeric failures (divergence, non-finite values, failed
/// verification), 1 for everything else.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<NumericFailure>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Diverged { .. } | Error::NonFinite { .. } => 2,
                _ => 1,
            };
        }
    }
    1
}

pub fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    if workers == 0 {
        bail!("--workers must be at least 1");
    }
    Ok(rayon::ThreadPoolBuilder::new().num_threads(workers).build()?)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?))
}

/// Trains with `cfg` and writes the log, timings and final networks into
/// `cfg.out`.
pub fn cmd_train(cfg: &RunConfig, workers: usize, out: &mut dyn Write) -> Result<()> {
    let pool = thread_pool(workers)?;
    cfg.write_effective()?;
    let env = cfg.env.model();
    let mut log = create(&cfg.out.join(TRAIN_LOG))?;
    let mut timing = create(&cfg.out.join(TIMING))?;
    writeln!(log, "{}", EpisodeLog::HEADER)?;
    writeln!(timing, "episode,wall_seconds")?;
    let mut observer = |p: algo::Progress<'_>| -> cacto_core::Result<()> {
        let io = |source| Error::Io { path: cfg.out.join(TRAIN_LOG), source };
        writeln!(log, "{}", p.log.row()).map_err(io)?;
        writeln!(timing, "{},{:?}", p.log.episode, p.log.wall_seconds).map_err(io)?;
        Ok(())
    };
    let result = algo::train(&cfg.train, &env, &cfg.trajopt, Some(&pool), &mut observer);
    log.flush()?;
    timing.flush()?;
    let trained = result?;
    nn::save_actor(&cfg.out.join(ACTOR_CHECKPOINT), &trained.actor)?;
    nn::save_critic(&cfg.out.join(CRITIC_CHECKPOINT), &trained.critic)?;
    nn::save_critic(&cfg.out.join(TARGET_CRITIC_CHECKPOINT), &trained.target_critic)?;
    writeln!(
        out,
        "trained {} episodes ({} updates, {} env steps) into {}",
        trained.log.len(),
        trained.updates,
        trained.env_steps,
        cfg.out.display()
    )?;
    Ok(())
}

/// Evaluates the grid, exports the tables and writes `stats.toml`.
pub fn cmd_eval_grid(
    cfg: &RunConfig,
    checkpoint: &Path,
    workers: usize,
    out: &mut dyn Write,
) -> Result<(GridEvalResult, RegionStats)> {
    let pool = thread_pool(workers)?;
    let env = cfg.env.model();
    let actor = load_actor(checkpoint, Some(env.state_dim()))
        .with_context(|| format!("checkpoint {} does not fit {}", checkpoint.display(), env.kind))?;
    if actor.output_dim() != env.control_dim() {
        return Err(Error::Dimension { what: "actor output", expected: env.control_dim(), got: actor.output_dim() })
            .with_context(|| format!("checkpoint {} does not fit {}", checkpoint.display(), env.kind));
    }
    cfg.write_effective()?;
    let normalizer = Normalizer::from_env(&env);
    let result = bench::eval_grid(
        &env,
        Some((&actor, &normalizer)),
        &cfg.bench.grid,
        &cfg.bench.hard_region,
        &cfg.trajopt,
        cfg.seed,
        Some(&pool),
    )?;
    bench::export(&result, &cfg.out)?;
    let stats = bench::win_stats(&result)?;
    let text = toml::to_string(&stats)?;
    fs::write(cfg.out.join(STATS), &text)?;
    writeln!(out, "# {} rows written to {}", result.rows.len(), cfg.out.display())?;
    write!(out, "{text}")?;
    Ok((result, stats))
}

#[derive(Debug, Serialize)]
struct VerifyEntry {
    mdp: usize,
    start: usize,
    iterations: usize,
    max_error: f64,
    monotone: bool,
    contract_violations: usize,
    trace_errors: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct VerifyReport {
    passed: bool,
    tolerance: f64,
    max_error: f64,
    records: Vec<VerifyEntry>,
}

/// Runs the tabular check on `mdps` and prints a TOML report. Fails with a
/// [`NumericFailure`] unless every record passes.
pub fn tabular_verify(
    mdps: &[GridMdp],
    cfg: &RunConfig,
    search: &dyn LocalSearch,
    out: &mut dyn Write,
) -> Result<Vec<VerifyRecord>> {
    let records = tabular::verify(mdps, cfg.tabular.starts, cfg.seed, search);
    let tol = cfg.tabular.tolerance;
    let passed = !records.is_empty() && records.iter().all(|r| r.passed(tol));
    let report = VerifyReport {
        passed,
        tolerance: tol,
        max_error: records.iter().map(|r| r.max_error).fold(0.0, f64::max),
        records: records
            .iter()
            .map(|r| VerifyEntry {
                mdp: r.mdp,
                start: r.start,
                iterations: r.iterations,
                max_error: r.max_error,
                monotone: r.monotone,
                contract_violations: r.contract_violations,
                trace_errors: r.trace_errors.clone(),
            })
            .collect(),
    };
    write!(out, "{}", toml::to_string(&report)?)?;
    if !passed {
        return Err(NumericFailure(format!(
            "tabular verification failed (max error {:e}, tolerance {tol:e})",
            report.max_error
        ))
        .into());
    }
    Ok(records)
}

pub fn cmd_tabular_verify(cfg: &RunConfig, out: &mut dyn Write) -> Result<Vec<VerifyRecord>> {
    tabular_verify(&tabular::verification_suite(cfg.seed), cfg, &tabular::CoordinateDescent, out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum WarmStart {
    Ics,
    Random,
    Policy,
    Detour,
}

#[derive(Debug, Clone)]
pub struct SolveRequest {
    pub x0: Vec<f64>,
    pub t0: usize,
    pub warm_start: WarmStart,
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct SolveSummary {
    env: EnvKind,
    warm_start: String,
    cost: f64,
    initial_guess_cost: f64,
    iterations: usize,
    converged: bool,
    regularization_final: f64,
    final_state: Vec<f64>,
    controls: Vec<Vec<f64>>,
}

/// One trajectory-optimisation solve; prints the report as TOML.
pub fn cmd_to_solve(cfg: &RunConfig, req: &SolveRequest, out: &mut dyn Write) -> Result<SolveReport> {
    let env = cfg.env.model();
    let n = env.state_dim() - 1;
    if req.x0.len() != n {
        return Err(Error::Dimension { what: "x0", expected: n, got: req.x0.len() })
            .with_context(|| format!("{} states have {n} components", env.kind));
    }
    if req.t0 >= env.horizon {
        return Err(Error::InvalidTime { time: req.t0 as f64, horizon: env.horizon }.into());
    }
    let x0 = State::from_parts(&req.x0, req.t0);
    let guess = match req.warm_start {
        WarmStart::Ics => warm_start::warm_start_ics(&env, &x0),
        WarmStart::Random => warm_start::warm_start_random(
            &env,
            &x0,
            bench::random_guess_seed(cfg.seed, 0, 0),
        ),
        WarmStart::Policy => {
            let Some(path) = &req.checkpoint else {
                bail!("--warm-start policy needs --checkpoint");
            };
            let actor = load_actor(path, Some(env.state_dim()))?;
            warm_start::warm_start_policy(&env, &x0, &actor, &Normalizer::from_env(&env))?
        }
        WarmStart::Detour => warm_start::warm_start_waypoints(&env, &x0, &DEFAULT_DETOUR[1..], 1.5)?,
    };
    let report = trajopt::solve(&env, &x0, &guess, &cfg.trajopt)?;
    let summary = SolveSummary {
        env: env.kind,
        warm_start: format!("{:?}", req.warm_start).to_lowercase(),
        cost: report.cost,
        initial_guess_cost: report.initial_guess_cost,
        iterations: report.iterations,
        converged: report.converged,
        regularization_final: report.regularization_final,
        final_state: report.trajectory.final_state().physical().to_vec(),
        controls: report.trajectory.controls.iter().map(|u| u.0.clone()).collect(),
    };
    write!(out, "{}", toml::to_string(&summary)?)?;
    Ok(report)
}
