//! Shared fixtures for the integration and acceptance tests.
#![allow(dead_code)]

use bilevel_abm::game::{
    ActionSpace, ActionValue, Characteristics, EnvSpec, Environment, FollowerAction, Observation,
    ObservationLayout, StepOutcome,
};
use bilevel_abm::Result;

/// Minimal game: every follower earns 1 per step, the leader earns
/// `−(θ − 0.5)²`, and episodes only end at the horizon.
#[derive(Clone, Debug)]
pub struct StubEnv {
    pub n_followers: usize,
    pub horizon: usize,
    pub leader_period: usize,
    pub theta_max: f64,
    theta: Characteristics,
}

impl StubEnv {
    pub fn new(n_followers: usize, horizon: usize) -> Self {
        Self::with_theta_max(n_followers, horizon, 1.0)
    }

    pub fn with_theta_max(n_followers: usize, horizon: usize, theta_max: f64) -> Self {
        StubEnv {
            n_followers,
            horizon,
            leader_period: horizon.max(1),
            theta_max,
            theta: Characteristics::new(vec![0.0], vec![(0.0, theta_max)]).unwrap(),
        }
    }

    fn obs(&self) -> Observation {
        Observation(vec![self.theta.values()[0]])
    }
}

impl Environment for StubEnv {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            n_followers: self.n_followers,
            leader_obs: ObservationLayout::new(vec!["theta"]),
            follower_obs: ObservationLayout::new(vec!["theta"]),
            leader_action: ActionSpace::Continuous(vec![(0.0, self.theta_max)]),
            follower_action: ActionSpace::Discrete(2),
            leader_action_period: self.leader_period,
            horizon: self.horizon,
        }
    }

    fn default_characteristics(&self) -> Characteristics {
        Characteristics::new(vec![0.0], vec![(0.0, self.theta_max)]).unwrap()
    }

    fn reset(&mut self, theta: &Characteristics, _seed: u64) -> Result<Vec<Observation>> {
        self.theta.set(theta.values())?;
        Ok(vec![self.obs(); self.n_followers + 1])
    }

    fn leader_observe(&self) -> Observation {
        self.obs()
    }

    fn leader_apply(&mut self, action: &ActionValue) -> Result<Characteristics> {
        if let Some(v) = action.as_continuous() {
            self.theta.set(v)?;
        }
        Ok(self.theta.clone())
    }

    fn follower_observations(&self) -> Vec<Observation> {
        vec![self.obs(); self.n_followers]
    }

    fn follower_step(&mut self, _actions: &[FollowerAction]) -> Result<StepOutcome> {
        let t = self.theta.values()[0];
        Ok(StepOutcome {
            observations: self.follower_observations(),
            follower_rewards: vec![1.0; self.n_followers],
            leader_reward: -(t - 0.5).powi(2),
            done: false,
        })
    }

    fn follower_view(&self, _position: usize) -> Vec<f64> {
        self.theta.values().to_vec()
    }

    fn characteristics(&self) -> &Characteristics {
        &self.theta
    }
}

/// Grid-search maximiser of `f` on `[lo, hi]`.
pub fn grid_argmax(f: impl Fn(f64) -> f64, lo: f64, hi: f64, points: usize) -> f64 {
    (0..=points)
        .map(|i| lo + (hi - lo) * i as f64 / points as f64)
        .max_by(|a, b| f(*a).total_cmp(&f(*b)))
        .unwrap()
}
