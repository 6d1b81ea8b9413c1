use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{compute_targets, episode_transitions, Lookahead, ReplayBuffer};
use crate::dyncore::{rollout_controls, ControlProblem, State};
use crate::environments::{EnvKind, EnvModel};
use crate::nn::{self, ActorNet, AdamState, CriticNet, Normalizer};
use crate::seeds::{component_seed, indexed_rng, Component};
use crate::trajopt::{solve, warm_start_policy, SolverOptions};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Number of episodes `M`.
    pub episodes: usize,
    pub lookahead: Lookahead,
    /// Minibatch size `S`.
    pub batch_size: usize,
    /// Update rounds `K` per update phase.
    pub updates_per_phase: usize,
    /// Episodes between update phases.
    pub episodes_per_update: usize,
    /// Target critic rate.
    pub tau: f64,
    pub lr_critic: f64,
    pub lr_actor: f64,
    pub buffer_capacity: usize,
    pub l2_weight: f64,
    pub critic_hidden: Vec<usize>,
    /// Fixed factor applied to the critic's linear output.
    pub critic_output_scale: f64,
    pub actor_width: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn for_env(kind: EnvKind) -> Self {
        let (lr_critic, lr_actor, lookahead) = match kind {
            EnvKind::SingleIntegrator => (5e-3, 1e-4, Lookahead::MonteCarlo),
            EnvKind::DoubleIntegrator => (5e-3, 5e-4, Lookahead::MonteCarlo),
            EnvKind::DubinsCar => (1e-3, 5e-4, Lookahead::Steps(50)),
            EnvKind::Manipulator => (1e-3, 5e-5, Lookahead::Steps(50)),
        };
        TrainConfig {
            episodes: 80_000,
            lookahead,
            batch_size: 128,
            updates_per_phase: 10,
            episodes_per_update: 10,
            tau: 0.005,
            lr_critic,
            lr_actor,
            buffer_capacity: 65_536,
            l2_weight: nn::L2_WEIGHT,
            critic_hidden: nn::CRITIC_HIDDEN.to_vec(),
            critic_output_scale: 1.0,
            actor_width: nn::ACTOR_HIDDEN,
            seed: 0,
        }
    }

    pub fn validate(&self, horizon: usize) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if let Lookahead::Steps(l) = self.lookahead {
            if l + 1 > horizon {
                return fail(format!("lookahead {l} exceeds horizon - 1 = {}", horizon.saturating_sub(1)));
            }
        }
        if self.batch_size == 0 || self.batch_size > self.buffer_capacity {
            return fail(format!(
                "batch size {} must lie in 1..={} (buffer capacity)",
                self.batch_size, self.buffer_capacity
            ));
        }
        if self.episodes_per_update == 0 {
            return fail("episodes_per_update must be positive".into());
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return fail(format!("tau must lie in (0, 1], got {}", self.tau));
        }
        for (name, v) in [
            ("lr_critic", self.lr_critic),
            ("lr_actor", self.lr_actor),
            ("critic_output_scale", self.critic_output_scale),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return fail(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.l2_weight >= 0.0) {
            return fail(format!("l2_weight must be non-negative, got {}", self.l2_weight));
        }
        if self.actor_width == 0 || self.critic_hidden.contains(&0) {
            return fail("layer widths must be positive".into());
        }
        Ok(())
    }
}

/// Random episode start: cost point uniform over the workspace, remaining
/// components uniform within the state bounds, time uniform over
/// `0..T`. Manipulator joint configurations are redrawn until the end
/// effector lies inside the workspace.
pub fn sample_initial_state(env: &EnvModel, rng: &mut impl Rng) -> State {
    let b = &env.state_bounds;
    let [[x0, x1], [y0, y1]] = env.workspace;
    let mut phys: Vec<f64> = (0..b.dim()).map(|i| rng.random_range(b.lower[i]..=b.upper[i])).collect();
    match env.kind {
        EnvKind::Manipulator => loop {
            let p = env.forward_kinematics(&phys[..3]);
            if (x0..=x1).contains(&p[0]) && (y0..=y1).contains(&p[1]) {
                break;
            }
            for (i, q) in phys.iter_mut().enumerate().take(3) {
                *q = rng.random_range(b.lower[i]..=b.upper[i]);
            }
        },
        _ => {
            phys[0] = rng.random_range(x0..=x1);
            phys[1] = rng.random_range(y0..=y1);
        }
    }
    State::from_parts(&phys, rng.random_range(0..env.horizon))
}

/// One Adam step on the critic regression loss. Returns the data loss
/// before the step.
pub fn critic_update(
    critic: &mut CriticNet,
    adam: &mut AdamState,
    inputs: &[f64],
    targets: &[f64],
    l2: f64,
) -> Result<f64> {
    let (loss, grad) = critic.loss_and_grad(inputs, targets, l2);
    adam.update(&mut critic.params, &grad)?;
    Ok(loss)
}

/// One Adam step on the mean action value of the actor's controls. Returns
/// the loss before the step.
#[allow(clippy::too_many_arguments)]
pub fn actor_update<P: ControlProblem + ?Sized>(
    actor: &mut ActorNet,
    adam: &mut AdamState,
    critic: &CriticNet,
    problem: &P,
    normalizer: &Normalizer,
    states: &[State],
    l2: f64,
) -> Result<f64> {
    let (loss, grad) = nn::actor_loss_and_grad(actor, critic, problem, normalizer, states, l2)?;
    adam.update(&mut actor.params, &grad)?;
    Ok(loss)
}

/// Per-episode training record.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub episode: usize,
    pub x0: State,
    /// Cost of the actor rollout used as warm start.
    pub warm_start_cost: f64,
    pub to_cost: f64,
    pub to_iterations: usize,
    pub to_converged: bool,
    /// Mean losses of the update phase that followed this episode, if any.
    pub critic_loss: Option<f64>,
    pub actor_loss: Option<f64>,
    pub buffer_len: usize,
    pub updates: usize,
    pub env_steps: usize,
    pub wall_seconds: f64,
}

impl EpisodeLog {
    pub const HEADER: &'static str =
        "episode,x0,t0,warm_start_cost,to_cost,to_iterations,to_converged,critic_loss,actor_loss,buffer_len,updates,env_steps";

    /// Log row without wall time, so identical runs give identical rows.
    pub fn row(&self) -> String {
        let x0: Vec<String> = self.x0.physical().iter().map(|v| format!("{v:?}")).collect();
        let opt = |v: Option<f64>| v.map(|v| format!("{v:?}")).unwrap_or_default();
        format!(
            "{},{},{},{:?},{:?},{},{},{},{},{},{},{}",
            self.episode,
            x0.join(" "),
            self.x0.time(),
            self.warm_start_cost,
            self.to_cost,
            self.to_iterations,
            self.to_converged,
            opt(self.critic_loss),
            opt(self.actor_loss),
            self.buffer_len,
            self.updates,
            self.env_steps,
        )
    }
}

pub struct TrainOutput {
    pub actor: ActorNet,
    pub critic: CriticNet,
    pub target_critic: CriticNet,
    pub normalizer: Normalizer,
    pub buffer: ReplayBuffer,
    pub log: Vec<EpisodeLog>,
    pub updates: usize,
    pub env_steps: usize,
}

/// State handed to the observer after every episode.
pub struct Progress<'a> {
    pub log: &'a EpisodeLog,
    pub actor: &'a ActorNet,
    pub critic: &'a CriticNet,
}

struct Episode {
    x0: State,
    warm_start_cost: f64,
    report: crate::trajopt::SolveReport,
    trajectory: crate::dyncore::Trajectory,
}

fn run_episode(
    env: &EnvModel,
    actor: &ActorNet,
    normalizer: &Normalizer,
    solver: &SolverOptions,
    env_seed: u64,
    index: usize,
) -> Result<Episode> {
    let mut rng = indexed_rng(env_seed, index as u64);
    let x0 = sample_initial_state(env, &mut rng);
    let guess = warm_start_policy(env, &x0, actor, normalizer)?;
    let report = solve(env, &x0, &guess, solver)?;
    let trajectory = rollout_controls(env, &x0, &report.trajectory.controls)?;
    Ok(Episode { x0, warm_start_cost: guess.total_cost(), report, trajectory })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Runs the full training loop.
///
/// Episodes between two update phases all warm start from the same actor,
/// so they are generated concurrently on `pool` (or the global pool) with
/// one RNG stream per episode; results do not depend on the thread count.
pub fn train(
    config: &TrainConfig,
    env: &EnvModel,
    solver: &SolverOptions,
    pool: Option<&rayon::ThreadPool>,
    observer: &mut dyn FnMut(Progress<'_>) -> Result<()>,
) -> Result<TrainOutput> {
    env.validate()?;
    config.validate(env.horizon)?;
    let n = env.state_dim();
    let normalizer = Normalizer::from_env(env);
    let mut init_rng = indexed_rng(component_seed(config.seed, Component::WeightInit), 0);
    let mut critic = CriticNet::with_hidden(n, &config.critic_hidden, &mut init_rng);
    critic.output_scale = config.critic_output_scale;
    let mut actor = ActorNet::with_width(n, config.actor_width, &env.u_max, &mut init_rng);
    let mut target = critic.clone();
    let mut critic_adam = AdamState::new(critic.param_count(), config.lr_critic);
    let mut actor_adam = AdamState::new(actor.param_count(), config.lr_actor);
    let mut buffer = ReplayBuffer::new(config.buffer_capacity);
    let env_seed = component_seed(config.seed, Component::EnvSampling);
    let mut sample_rng = indexed_rng(component_seed(config.seed, Component::BufferSampling), 0);

    let mut log = Vec::with_capacity(config.episodes);
    let (mut updates, mut env_steps) = (0, 0);
    let mut start = 0;
    let clock = Instant::now();
    while start < config.episodes {
        let end = (start + config.episodes_per_update).min(config.episodes);
        let generate = || -> Result<Vec<Episode>> {
            (start..end)
                .into_par_iter()
                .map(|i| run_episode(env, &actor, &normalizer, solver, env_seed, i))
                .collect()
        };
        let episodes = match pool {
            Some(p) => p.install(generate)?,
            None => generate()?,
        };
        let mut rows = Vec::with_capacity(episodes.len());
        for (i, ep) in (start..end).zip(episodes) {
            for t in episode_transitions(&ep.trajectory, config.lookahead, env.horizon)? {
                buffer.push(t);
            }
            env_steps += ep.trajectory.len();
            rows.push(EpisodeLog {
                episode: i,
                x0: ep.x0,
                warm_start_cost: ep.warm_start_cost,
                to_cost: ep.trajectory.total_cost(),
                to_iterations: ep.report.iterations,
                to_converged: ep.report.converged,
                critic_loss: None,
                actor_loss: None,
                buffer_len: buffer.len(),
                updates,
                env_steps,
                wall_seconds: 0.0,
            });
        }

        if end - start == config.episodes_per_update && !buffer.is_empty() {
            let mut closs = Vec::with_capacity(config.updates_per_phase);
            let mut aloss = Vec::with_capacity(config.updates_per_phase);
            for _ in 0..config.updates_per_phase {
                let batch = buffer.sample(config.batch_size, &mut sample_rng);
                let targets = compute_targets(&batch, &target, &normalizer);
                let mut inputs = vec![0.0; batch.len() * n];
                for (t, row) in batch.iter().zip(inputs.chunks_exact_mut(n)) {
                    normalizer.normalize_into(&t.state, row);
                }
                let states: Vec<State> = batch.iter().map(|t| t.state.clone()).collect();
                let c = critic_update(&mut critic, &mut critic_adam, &inputs, &targets, config.l2_weight)?;
                let a = actor_update(&mut actor, &mut actor_adam, &critic, env, &normalizer, &states, config.l2_weight)?;
                nn::soft_update(&mut target.params, &critic.params, config.tau)?;
                if !c.is_finite() || !a.is_finite() || critic.params.iter().chain(&actor.params).any(|p| !p.is_finite()) {
                    return Err(Error::Diverged {
                        episode: end - 1,
                        reason: format!("critic loss {c}, actor loss {a}, update {updates}"),
                    });
                }
                closs.push(c);
                aloss.push(a);
                updates += 1;
            }
            let last = rows.last_mut().unwrap();
            last.critic_loss = Some(mean(&closs));
            last.actor_loss = Some(mean(&aloss));
            last.updates = updates;
        }

        let elapsed = clock.elapsed().as_secs_f64();
        for mut row in rows {
            row.wall_seconds = elapsed;
            observer(Progress { log: &row, actor: &actor, critic: &critic })?;
            log.push(row);
        }
        start = end;
    }

    Ok(TrainOutput { actor, critic, target_critic: target, normalizer, buffer, log, updates, env_steps })
}
