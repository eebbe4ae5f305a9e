//! Non-learning actors: a constant action with no-op updates.

use crate::error::Result;
use crate::game::{ActionValue, Actor, Decision, Learner, Observation, Trajectory, UpdateStats};
use crate::rng::StreamRng;

/// Always plays the same action. Used for held-fixed leaders (baselines,
/// swept scenarios) and for tests.
#[derive(Clone, Debug, PartialEq)]
pub struct FixedPolicy {
    action: ActionValue,
    obs_dim: usize,
    updates: usize,
}

impl FixedPolicy {
    pub fn new(action: ActionValue, obs_dim: usize) -> Self {
        FixedPolicy {
            action,
            obs_dim,
            updates: 0,
        }
    }

    pub fn action(&self) -> &ActionValue {
        &self.action
    }
}

impl Actor for FixedPolicy {
    fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    fn act(&self, _obs: &Observation, _rng: &mut StreamRng, _explore: bool) -> Decision {
        Decision::fixed(self.action.clone())
    }
}

impl Learner for FixedPolicy {
    fn update(&mut self, _batch: &[&Trajectory]) -> Result<UpdateStats> {
        self.updates += 1;
        Ok(UpdateStats::default())
    }

    fn updates(&self) -> usize {
        self.updates
    }
}
