//! Leader-follower partially observable Markov game.
//!
//! Agent 0 is the leader, agents `1..=n` are followers. The leader influences
//! followers only through the [`Characteristics`] vector, which environments
//! embed (fully or partially) into follower observations.

mod env;
mod rollout;
mod train;
mod types;

pub use env::{EnvSpec, Environment, FollowerAction, ObservationLayout, StepOutcome};
pub use rollout::{collect_episodes, rollout_episode, Actor, Decision, Episode, RolloutOptions};
pub use train::{
    alternating_train, shared_policy_group, Learner, PolicyBinding, PolicyGroup, TimescaleSchedule,
    TrainingOptions, TrainingReport, UpdateStats,
};
pub use types::{
    discounted_return, ActionSpace, ActionValue, AgentId, Characteristics, Observation, Role,
    Trajectory, Transition,
};
