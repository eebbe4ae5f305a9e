//! Plugging a new world into the engine: a toy public-goods game where the
//! leader picks a matching rate and followers choose how much to
//! contribute. Trains the leader with PPO and a Bayesian-optimisation
//! search for comparison.
//!
//!     cargo run --release --example custom_environment

use bilevel_abm::game::{
    ActionSpace, ActionValue, Characteristics, EnvSpec, Environment, FollowerAction, Observation,
    ObservationLayout, StepOutcome,
};
use bilevel_abm::harness::run::{eval_seeds, train_game};
use bilevel_abm::harness::ExperimentConfig;
use bilevel_abm::game::Learner;
use bilevel_abm::learners::{AcquisitionConfig, BayesLeader, PpoLearner};
use bilevel_abm::Result;

/// Each follower keeps `1 − c` of its endowment and receives an equal share
/// of the matched pot `(1 + m)·Σc`. The leader pays for matching and values
/// total payoff.
#[derive(Clone)]
struct PublicGoods {
    n: usize,
    horizon: usize,
    theta: Characteristics,
    last_pot: f64,
}

impl PublicGoods {
    fn new(n: usize, horizon: usize) -> Self {
        PublicGoods {
            n,
            horizon,
            theta: Characteristics::at_lower(vec![(0.0, 2.0)]).unwrap(),
            last_pot: 0.0,
        }
    }

    fn rate(&self) -> f64 {
        self.theta.values()[0]
    }
}

impl Environment for PublicGoods {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            n_followers: self.n,
            leader_obs: ObservationLayout::new(vec!["rate"]),
            follower_obs: ObservationLayout::new(vec!["rate", "last_pot"]).with_scale(vec![1.0, 1.0 / self.n as f64]),
            leader_action: ActionSpace::Continuous(vec![(0.0, 2.0)]),
            follower_action: ActionSpace::Continuous(vec![(0.0, 1.0)]),
            leader_action_period: self.horizon,
            horizon: self.horizon,
        }
    }

    fn default_characteristics(&self) -> Characteristics {
        Characteristics::at_lower(vec![(0.0, 2.0)]).unwrap()
    }

    fn reset(&mut self, theta: &Characteristics, _seed: u64) -> Result<Vec<Observation>> {
        self.theta.set(theta.values())?;
        self.last_pot = 0.0;
        let mut obs = vec![self.leader_observe()];
        obs.extend(self.follower_observations());
        Ok(obs)
    }

    fn leader_observe(&self) -> Observation {
        Observation(vec![self.rate()])
    }

    fn leader_apply(&mut self, action: &ActionValue) -> Result<Characteristics> {
        if let Some(v) = action.as_continuous() {
            self.theta.set(v)?;
        }
        Ok(self.theta.clone())
    }

    fn follower_observations(&self) -> Vec<Observation> {
        vec![Observation(vec![self.rate(), self.last_pot]); self.n]
    }

    fn follower_step(&mut self, actions: &[FollowerAction]) -> Result<StepOutcome> {
        let c: Vec<f64> = actions
            .iter()
            .map(|a| a.action.as_continuous().map_or(0.0, |v| v[0].clamp(0.0, 1.0)))
            .collect();
        let total: f64 = c.iter().sum();
        let m = self.rate();
        let share = (1.0 + m) * total / self.n as f64;
        let rewards: Vec<f64> = c.iter().map(|ci| 1.0 - ci + share).collect();
        // matching costs the leader m per unit contributed, at a 0.8 shadow price
        let leader_reward = rewards.iter().sum::<f64>() - 0.8 * m * total;
        self.last_pot = total;
        Ok(StepOutcome {
            observations: self.follower_observations(),
            follower_rewards: rewards,
            leader_reward,
            done: false,
        })
    }

    fn follower_view(&self, _position: usize) -> Vec<f64> {
        vec![self.rate()]
    }

    fn characteristics(&self) -> &Characteristics {
        &self.theta
    }

    fn step_metrics(&self) -> Vec<(&'static str, f64)> {
        vec![("pot", self.last_pot)]
    }
}

fn main() -> Result<()> {
    let env = PublicGoods::new(5, 20);
    let cfg = ExperimentConfig::from_toml(
        r#"
        task = "policy-design"
        [schedule]
        inner_updates_per_outer = 4
        episodes_per_update = 4
        leader_episodes_per_update = 8
        [learner]
        hidden = [16]
        learning_rate = 3e-3
        minibatch_size = 100
        [leader]
        hidden = []
        learning_rate = 1e-2
        minibatch_size = 8
        "#,
    )?;
    let spec = env.spec();
    let seeds = eval_seeds(11, &[0], 10);

    let ppo = PpoLearner::new(&spec.leader_action, spec.leader_obs.scale.clone(), cfg.leader.clone(), 1)?;
    let bayes = BayesLeader::new(vec![(0.0, 2.0)], spec.leader_obs.dim(), AcquisitionConfig::default(), 2)?;
    let leaders: [(&str, Box<dyn Learner>); 2] = [("ppo", Box::new(ppo)), ("bayes", Box::new(bayes))];
    for (label, leader) in leaders {
        let game = train_game(env.clone(), leader, &cfg, 40, 11, None)?;
        let episodes = game.evaluate(None, false, &seeds, None)?;
        let rate = episodes.iter().map(|e| e.thetas[0][0]).sum::<f64>() / episodes.len() as f64;
        let pot: f64 = episodes.iter().map(|e| e.step_metrics["pot"].iter().sum::<f64>()).sum::<f64>()
            / (episodes.len() * spec.horizon) as f64;
        println!("{label:>5}: matching rate {rate:.3}, mean pot {pot:.3} of {}", spec.n_followers);
    }
    Ok(())
}
