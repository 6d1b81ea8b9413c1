//! Actor-critic policy learning where exploration comes from a trajectory
//! optimizer warm-started with rollouts of the learned policy.
//!
//! The crate is organised bottom-up:
//!
//! - [`dyncore`]: states, controls, trajectories, rollouts and the
//!   [`ControlProblem`] trait every system implements.
//! - [`environments`]: the four benchmark systems and the shared non-convex
//!   reaching cost.
//! - [`trajopt`]: a box-constrained iLQR solver and warm-start generators.
//! - [`nn`]: critic/actor networks with hand-written backpropagation and Adam.
//! - [`cacto`]: the training loop, replay buffer and target computation.
//! - [`tabular`]: the lookup-table variant and its value-iteration oracle.
//! - [`bench`]: grid evaluation of warm-start strategies and win statistics.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod bench;
pub mod cacto;
pub mod dyncore;
pub mod environments;
mod error;
pub mod nn;
pub mod seeds;
pub mod tabular;
pub mod trajopt;

pub use crate::dyncore::{
    rollout_controls, rollout_policy, total_cost, Control, ControlProblem, Derivatives, OcpSpec,
    State, TerminalDerivatives, Trajectory,
};
pub use crate::environments::{CostParams, EnvKind, EnvModel};
pub use crate::error::{Error, Result};
pub use crate::nn::{ActorNet, AdamState, CriticNet, Normalizer};
pub use crate::trajopt::{solve, SolveReport, SolverOptions};
