//! The actor-critic training loop: trajectory optimisation warm-started by
//! the current actor, replay of the optimised episodes, and critic/actor
//! updates with a slowly tracking target critic.

mod buffer;
mod train;
mod transition;

pub use buffer::ReplayBuffer;
pub use train::{
    actor_update, critic_update, sample_initial_state, train, EpisodeLog, Progress, TrainConfig,
    TrainOutput,
};
pub use transition::{
    compute_target, compute_targets, episode_transitions, partial_cost_to_go, Lookahead,
    Transition,
};
