use std::collections::BTreeMap;

use super::types::{ActionSpace, ActionValue, Characteristics, Observation};
use crate::error::Result;

/// Named observation slots plus a per-slot input scale applied by policies.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationLayout {
    pub slots: Vec<&'static str>,
    pub scale: Vec<f64>,
}

impl ObservationLayout {
    pub fn new(slots: Vec<&'static str>) -> Self {
        let scale = vec![1.0; slots.len()];
        ObservationLayout { slots, scale }
    }

    pub fn with_scale(mut self, scale: Vec<f64>) -> Self {
        assert_eq!(scale.len(), self.slots.len(), "one scale per slot");
        self.scale = scale;
        self
    }

    pub fn dim(&self) -> usize {
        self.slots.len()
    }

    pub fn slot(&self, name: &str) -> Option<usize> {
        self.slots.iter().position(|s| *s == name)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvSpec {
    pub n_followers: usize,
    pub leader_obs: ObservationLayout,
    pub follower_obs: ObservationLayout,
    pub leader_action: ActionSpace,
    pub follower_action: ActionSpace,
    /// Environment steps between leader decisions.
    pub leader_action_period: usize,
    pub horizon: usize,
}

/// What a follower hands to the environment: the chosen action and, for
/// categorical policies, the full distribution it was drawn from (needed by
/// environments that price information-processing costs).
#[derive(Clone, Debug, PartialEq)]
pub struct FollowerAction {
    pub action: ActionValue,
    pub probs: Option<Vec<f64>>,
}

impl FollowerAction {
    pub fn plain(action: ActionValue) -> Self {
        FollowerAction {
            action,
            probs: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub observations: Vec<Observation>,
    pub follower_rewards: Vec<f64>,
    pub leader_reward: f64,
    pub done: bool,
}

/// A parameterised simulator hosting one leader and `n` followers.
///
/// Implementations must be deterministic given the reset seed, the
/// characteristics and the sequence of actions.
pub trait Environment: Clone + Send + Sync {
    fn spec(&self) -> EnvSpec;

    /// Characteristics used at reset when the caller has no better value.
    fn default_characteristics(&self) -> Characteristics;

    /// Starts an episode. Returns observations for every agent, leader first.
    fn reset(&mut self, theta: &Characteristics, seed: u64) -> Result<Vec<Observation>>;

    fn leader_observe(&self) -> Observation;

    /// Writes the leader's action into the characteristics (clamped) and
    /// returns the stored value.
    fn leader_apply(&mut self, action: &ActionValue) -> Result<Characteristics>;

    /// Current follower observations, in follower order.
    fn follower_observations(&self) -> Vec<Observation>;

    fn follower_step(&mut self, actions: &[FollowerAction]) -> Result<StepOutcome>;

    /// The part of the characteristics follower `position` (zero-based) sees.
    fn follower_view(&self, position: usize) -> Vec<f64>;

    fn characteristics(&self) -> &Characteristics;

    /// Scalars recorded after every step (price, demand, ...).
    fn step_metrics(&self) -> Vec<(&'static str, f64)> {
        Vec::new()
    }

    /// Scalars recorded once at the end of an episode.
    fn episode_metrics(&self) -> BTreeMap<&'static str, f64> {
        BTreeMap::new()
    }
}
