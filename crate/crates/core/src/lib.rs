//! Tabular inverse reinforcement learning under transition-dynamics mismatch:
//! maximum causal entropy IRL, a robust two-player-game variant, exact
//! dynamic-programming solvers, an occupancy-matching feasibility test,
//! analytic performance-bound calculators, benchmark environments, and a
//! continuous-control relative-entropy extension.

pub mod bounds;
pub mod envs;
pub mod error;
pub mod feasibility;
pub mod irl;
pub mod mdp;
pub mod reirl;
pub mod solvers;

#[cfg(test)]
pub(crate) mod test_support;

pub use error::{Error, Result};
pub use mdp::{
    dyn_distance, expected_return, mix_dynamics, mix_policies, pol_distance, soft_return,
    state_occupancy, FeatureMatrix, OccupancyMeasure, RewardModel, StochasticPolicy, TabularMdp,
    Transitions,
};
pub use solvers::{
    soft_value_iteration, two_player_soft_vi, two_player_transition, value_iteration, HardSolution,
    SoftSolution, TwoPlayerSolution,
};
