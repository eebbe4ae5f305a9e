use std::collections::BTreeMap;

use rayon::prelude::*;

use super::env::{Environment, FollowerAction};
use super::types::{ActionValue, AgentId, Characteristics, Observation, Trajectory, Transition};
use crate::error::{Error, Result};
use crate::rng::{self, tag, StreamRng};

/// A policy's choice at one step.
#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    /// Action in environment coordinates.
    pub action: ActionValue,
    /// Sample in policy coordinates (the index for discrete actions).
    pub sample: Vec<f64>,
    pub log_prob: f64,
    pub value: f64,
    /// Categorical probabilities, when the policy has a categorical head.
    pub probs: Option<Vec<f64>>,
}

impl Decision {
    /// A deterministic decision carrying no learning signal.
    pub fn fixed(action: ActionValue) -> Self {
        Decision {
            action,
            sample: Vec::new(),
            log_prob: 0.0,
            value: 0.0,
            probs: None,
        }
    }
}

/// Anything that maps an observation to an action.
pub trait Actor: Sync {
    fn obs_dim(&self) -> usize;

    /// `explore = false` asks for the policy's greedy action.
    fn act(&self, obs: &Observation, rng: &mut StreamRng, explore: bool) -> Decision;
}

#[derive(Clone, Debug, PartialEq)]
pub struct RolloutOptions {
    pub horizon: usize,
    /// Environment steps between leader decisions.
    pub leader_action_period: usize,
    pub explore_leader: bool,
    pub explore_followers: bool,
}

impl RolloutOptions {
    /// Exploring rollout using the environment's own horizon and period.
    pub fn for_spec(spec: &super::EnvSpec) -> Self {
        RolloutOptions {
            horizon: spec.horizon,
            leader_action_period: spec.leader_action_period,
            explore_leader: true,
            explore_followers: true,
        }
    }
}

/// Everything recorded from one episode.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    /// Indexed by agent index: `[0]` is the leader.
    pub trajectories: Vec<Trajectory>,
    /// Characteristics in force after each leader decision.
    pub thetas: Vec<Vec<f64>>,
    pub step_metrics: BTreeMap<String, Vec<f64>>,
    pub episode_metrics: BTreeMap<String, f64>,
}

impl Episode {
    pub fn leader(&self) -> &Trajectory {
        &self.trajectories[0]
    }

    pub fn followers(&self) -> &[Trajectory] {
        &self.trajectories[1..]
    }

    pub fn len(&self) -> usize {
        self.trajectories[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn non_finite(agent: AgentId, what: impl Into<String>) -> Error {
    Error::NonFinite {
        agent,
        iteration: 0,
        what: what.into(),
    }
}

fn check_obs(agent: AgentId, obs: &Observation, step: usize) -> Result<()> {
    if obs.is_finite() {
        Ok(())
    } else {
        Err(non_finite(agent, format!("observation at step {step}: {:?}", obs.0)))
    }
}

/// Plays one episode. Leader decisions happen at steps where
/// `step % leader_action_period == 0`; followers act every step.
pub fn rollout_episode<E: Environment>(
    env: &mut E,
    leader: &dyn Actor,
    followers: &[&dyn Actor],
    theta: &Characteristics,
    options: &RolloutOptions,
    seed: u64,
) -> Result<Episode> {
    let spec = env.spec();
    let n = spec.n_followers;
    if followers.len() != n {
        return Err(Error::config(format!(
            "environment has {n} followers but {} policies were supplied",
            followers.len()
        )));
    }
    if leader.obs_dim() != spec.leader_obs.dim() {
        return Err(Error::config(format!(
            "leader policy expects {} inputs, environment provides {}",
            leader.obs_dim(),
            spec.leader_obs.dim()
        )));
    }
    for (i, f) in followers.iter().enumerate() {
        if f.obs_dim() != spec.follower_obs.dim() {
            return Err(Error::config(format!(
                "{} policy expects {} inputs, environment provides {}",
                AgentId::follower(i),
                f.obs_dim(),
                spec.follower_obs.dim()
            )));
        }
    }
    let period = options.leader_action_period.max(1);

    let mut trajectories: Vec<Trajectory> = (0..=n)
        .map(|i| Trajectory::new(AgentId::new(i), options.horizon))
        .collect();
    let mut episode = Episode {
        trajectories: Vec::new(),
        thetas: Vec::new(),
        step_metrics: BTreeMap::new(),
        episode_metrics: BTreeMap::new(),
    };
    if options.horizon == 0 {
        episode.trajectories = trajectories;
        return Ok(episode);
    }

    env.reset(theta, rng::derive(seed, &[tag::ENV]))?;
    let mut leader_rng = rng::stream(rng::derive(seed, &[tag::AGENT, 0]));
    let mut follower_rngs: Vec<StreamRng> = (1..=n)
        .map(|i| rng::stream(rng::derive(seed, &[tag::AGENT, i as u64])))
        .collect();

    for step in 0..options.horizon {
        let leader_obs = env.leader_observe();
        check_obs(AgentId::LEADER, &leader_obs, step)?;
        let leader_decision = if step % period == 0 {
            let d = leader.act(&leader_obs, &mut leader_rng, options.explore_leader);
            let applied = env.leader_apply(&d.action)?;
            episode.thetas.push(applied.values().to_vec());
            Some(d)
        } else {
            None
        };

        let obs = env.follower_observations();
        let mut decisions = Vec::with_capacity(n);
        for (i, o) in obs.iter().enumerate() {
            check_obs(AgentId::follower(i), o, step)?;
            decisions.push(followers[i].act(o, &mut follower_rngs[i], options.explore_followers));
        }
        let actions: Vec<FollowerAction> = decisions
            .iter()
            .map(|d| FollowerAction {
                action: d.action.clone(),
                probs: d.probs.clone(),
            })
            .collect();
        let outcome = env.follower_step(&actions)?;

        if !outcome.leader_reward.is_finite() {
            return Err(non_finite(
                AgentId::LEADER,
                format!("reward {} at step {step}", outcome.leader_reward),
            ));
        }
        for (i, r) in outcome.follower_rewards.iter().enumerate() {
            if !r.is_finite() {
                return Err(non_finite(AgentId::follower(i), format!("reward {r} at step {step}")));
            }
        }

        let leader_tr = match leader_decision {
            Some(d) => Transition {
                observation: leader_obs,
                action: Some(d.action),
                sample: d.sample,
                log_prob: d.log_prob,
                value: d.value,
                reward: outcome.leader_reward,
            },
            None => Transition {
                observation: leader_obs,
                action: None,
                sample: Vec::new(),
                log_prob: 0.0,
                value: 0.0,
                reward: outcome.leader_reward,
            },
        };
        trajectories[0].transitions.push(leader_tr);
        for (i, (d, o)) in decisions.into_iter().zip(obs).enumerate() {
            trajectories[i + 1].transitions.push(Transition {
                observation: o,
                action: Some(d.action),
                sample: d.sample,
                log_prob: d.log_prob,
                value: d.value,
                reward: outcome.follower_rewards[i],
            });
        }
        for (name, v) in env.step_metrics() {
            episode.step_metrics.entry(name.to_string()).or_default().push(v);
        }
        if outcome.done {
            break;
        }
    }
    episode.episode_metrics = env
        .episode_metrics()
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    episode.trajectories = trajectories;
    Ok(episode)
}

/// Runs one episode per seed, in parallel when `pool` is given. Results are
/// returned in seed order and do not depend on the worker count.
pub fn collect_episodes<E: Environment>(
    env: &E,
    leader: &dyn Actor,
    followers: &[&dyn Actor],
    theta: &Characteristics,
    options: &RolloutOptions,
    seeds: &[u64],
    pool: Option<&rayon::ThreadPool>,
) -> Result<Vec<Episode>> {
    let run = |seed: &u64| {
        let mut local = env.clone();
        rollout_episode(&mut local, leader, followers, theta, options, *seed)
    };
    match pool {
        Some(pool) if seeds.len() > 1 => pool.install(|| seeds.par_iter().map(run).collect()),
        _ => seeds.iter().map(run).collect(),
    }
}
