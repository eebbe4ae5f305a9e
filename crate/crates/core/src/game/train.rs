use std::collections::BTreeMap;

use super::env::Environment;
use super::rollout::{collect_episodes, Actor, Episode, RolloutOptions};
use super::types::{AgentId, Role, Trajectory};
use crate::error::{Error, Result};
use crate::metrics::MetricSeries;
use crate::rng::{self, tag};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct UpdateStats {
    pub mean_kl: f64,
    pub clip_fraction: f64,
    pub samples: usize,
}

/// An [`Actor`] that can improve itself from trajectories it produced.
pub trait Learner: Actor + Send {
    fn update(&mut self, batch: &[&Trajectory]) -> Result<UpdateStats>;

    /// Number of completed `update` calls.
    fn updates(&self) -> usize;
}

/// Nested timescales: `inner_updates_per_outer` follower updates for every
/// leader update.
#[derive(Clone, Debug, PartialEq)]
pub struct TimescaleSchedule {
    pub inner_updates_per_outer: usize,
    pub leader_action_period: usize,
    pub total_outer_iterations: usize,
}

impl TimescaleSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.inner_updates_per_outer == 0 {
            return Err(Error::config("inner_updates_per_outer must be at least 1"));
        }
        if self.leader_action_period == 0 {
            return Err(Error::config("leader_action_period must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingOptions {
    pub horizon: usize,
    /// Discount used when reporting returns.
    pub gamma: f64,
    pub episodes_per_update: usize,
    pub leader_episodes_per_update: usize,
}

/// A set of followers that share one trainable policy.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyGroup {
    members: Vec<AgentId>,
}

impl PolicyGroup {
    pub fn members(&self) -> &[AgentId] {
        &self.members
    }
}

/// Groups followers under one shared policy. The leader cannot join a group.
pub fn shared_policy_group(follower_ids: &[AgentId]) -> Result<PolicyGroup> {
    if follower_ids.is_empty() {
        return Err(Error::config("a policy group needs at least one follower"));
    }
    let mut members = follower_ids.to_vec();
    if members.iter().any(|id| id.role() == Role::Leader) {
        return Err(Error::config("the leader cannot share a follower policy"));
    }
    members.sort();
    if members.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::config("follower listed twice in a policy group"));
    }
    Ok(PolicyGroup { members })
}

/// Assignment of every follower to exactly one policy group.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyBinding {
    group_of: Vec<usize>,
    groups: Vec<PolicyGroup>,
}

impl PolicyBinding {
    pub fn new(n_followers: usize, groups: Vec<PolicyGroup>) -> Result<Self> {
        let mut group_of = vec![usize::MAX; n_followers];
        for (g, group) in groups.iter().enumerate() {
            for id in &group.members {
                let pos = id.follower_position().expect("groups hold followers only");
                if pos >= n_followers {
                    return Err(Error::config(format!("{id} does not exist")));
                }
                if group_of[pos] != usize::MAX {
                    return Err(Error::config(format!("{id} is in more than one group")));
                }
                group_of[pos] = g;
            }
        }
        if let Some(pos) = group_of.iter().position(|&g| g == usize::MAX) {
            return Err(Error::config(format!("{} has no policy group", AgentId::follower(pos))));
        }
        Ok(PolicyBinding { group_of, groups })
    }

    /// One policy for every follower.
    pub fn shared(n_followers: usize) -> Self {
        let ids: Vec<AgentId> = (0..n_followers).map(AgentId::follower).collect();
        let groups = if ids.is_empty() {
            Vec::new()
        } else {
            vec![shared_policy_group(&ids).expect("followers only")]
        };
        PolicyBinding::new(n_followers, groups).expect("covers all followers")
    }

    /// One policy per follower.
    pub fn individual(n_followers: usize) -> Self {
        let groups = (0..n_followers)
            .map(|i| shared_policy_group(&[AgentId::follower(i)]).expect("followers only"))
            .collect();
        PolicyBinding::new(n_followers, groups).expect("covers all followers")
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn n_followers(&self) -> usize {
        self.group_of.len()
    }

    pub fn group_of(&self, position: usize) -> usize {
        self.group_of[position]
    }

    pub fn groups(&self) -> &[PolicyGroup] {
        &self.groups
    }

    /// Splits follower trajectories into one buffer per group.
    pub fn partition<'a>(
        &self,
        trajectories: impl IntoIterator<Item = &'a Trajectory>,
    ) -> Vec<Vec<&'a Trajectory>> {
        let mut buffers = vec![Vec::new(); self.groups.len()];
        for t in trajectories {
            if let Some(pos) = t.agent.follower_position() {
                buffers[self.group_of[pos]].push(t);
            }
        }
        buffers
    }

    /// Per-follower actor view over the group learners.
    pub fn actors<'a>(&self, learners: &'a [Box<dyn Learner>]) -> Vec<&'a dyn Actor> {
        self.group_of
            .iter()
            .map(|&g| learners[g].as_ref() as &dyn Actor)
            .collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingReport {
    pub series: Vec<MetricSeries>,
    pub leader_updates: usize,
    /// Updates performed on each follower group.
    pub follower_updates: Vec<usize>,
}

impl TrainingReport {
    pub fn series(&self, name: &str) -> Option<&MetricSeries> {
        self.series.iter().find(|s| s.name == name)
    }
}

fn batch_seeds(root: u64, path: &[u64], count: usize) -> Vec<u64> {
    (0..count as u64)
        .map(|e| {
            let mut full = path.to_vec();
            full.push(e);
            rng::derive(root, &full)
        })
        .collect()
}

fn check_stats(agent: AgentId, stats: &UpdateStats) -> Result<()> {
    if stats.mean_kl.is_finite() && stats.clip_fraction.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            agent,
            iteration: 0,
            what: format!("update diagnostics {stats:?}"),
        })
    }
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Per-iteration summary of a batch of episodes.
fn summarize(episodes: &[Episode], gamma: f64) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    let mut leader = Vec::new();
    let mut follower = Vec::new();
    for ep in episodes {
        leader.push(ep.leader().discounted_return(gamma)?);
        for f in ep.followers() {
            follower.push(f.discounted_return(gamma)?);
        }
    }
    out.insert("leader_return".to_string(), mean(leader));
    out.insert("follower_return".to_string(), mean(follower));
    let mut acc: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for ep in episodes {
        for (k, v) in &ep.step_metrics {
            acc.entry(k.clone()).or_default().push(mean(v.iter().copied()));
        }
        for (k, v) in &ep.episode_metrics {
            acc.entry(k.clone()).or_default().push(*v);
        }
        if let Some(theta) = ep.thetas.first() {
            for (i, v) in theta.iter().enumerate() {
                acc.entry(format!("theta_{i}")).or_default().push(*v);
            }
        }
    }
    for (k, v) in acc {
        out.insert(k, mean(v));
    }
    Ok(out)
}

/// Alternating leader/follower optimisation with nested timescales.
///
/// Each outer iteration performs `inner_updates_per_outer` follower updates
/// (leader held fixed, one fresh batch per update) and then one leader update
/// on a fresh batch collected with the followers held fixed.
#[allow(clippy::too_many_arguments)]
pub fn alternating_train<E: Environment>(
    env: &E,
    leader: &mut dyn Learner,
    followers: &mut [Box<dyn Learner>],
    binding: &PolicyBinding,
    schedule: &TimescaleSchedule,
    options: &TrainingOptions,
    seed: u64,
    pool: Option<&rayon::ThreadPool>,
) -> Result<TrainingReport> {
    schedule.validate()?;
    let spec = env.spec();
    if binding.n_followers() != spec.n_followers {
        return Err(Error::config(format!(
            "policy binding covers {} followers, environment has {}",
            binding.n_followers(),
            spec.n_followers
        )));
    }
    if followers.len() != binding.n_groups() {
        return Err(Error::config(format!(
            "{} follower learners for {} policy groups",
            followers.len(),
            binding.n_groups()
        )));
    }
    let rollout = RolloutOptions {
        horizon: options.horizon,
        leader_action_period: schedule.leader_action_period,
        explore_leader: true,
        explore_followers: true,
    };
    let theta = env.default_characteristics();
    let mut report = TrainingReport {
        series: Vec::new(),
        leader_updates: 0,
        follower_updates: vec![0; followers.len()],
    };
    let mut series: BTreeMap<String, MetricSeries> = BTreeMap::new();

    for it in 0..schedule.total_outer_iterations {
        for k in 0..schedule.inner_updates_per_outer {
            let seeds = batch_seeds(
                seed,
                &[tag::FOLLOWER_BATCH, it as u64, k as u64],
                options.episodes_per_update,
            );
            let episodes = {
                let actors = binding.actors(followers);
                collect_episodes(env, &*leader, &actors, &theta, &rollout, &seeds, pool)
                    .map_err(|e| e.at_iteration(it))?
            };
            let buffers = binding.partition(episodes.iter().flat_map(|e| e.followers()));
            for (g, (learner, buffer)) in followers.iter_mut().zip(&buffers).enumerate() {
                let agent = binding.groups()[g].members()[0];
                let stats = learner.update(buffer).map_err(|e| match e {
                    Error::NonFinite { what, .. } => Error::NonFinite {
                        agent,
                        iteration: it,
                        what,
                    },
                    other => other,
                })?;
                check_stats(agent, &stats).map_err(|e| e.at_iteration(it))?;
                report.follower_updates[g] += 1;
            }
        }

        let seeds = batch_seeds(seed, &[tag::LEADER_BATCH, it as u64], options.leader_episodes_per_update);
        let episodes = {
            let actors = binding.actors(followers);
            collect_episodes(env, &*leader, &actors, &theta, &rollout, &seeds, pool)
                .map_err(|e| e.at_iteration(it))?
        };
        let leader_batch: Vec<&Trajectory> = episodes.iter().map(|e| e.leader()).collect();
        let stats = leader.update(&leader_batch).map_err(|e| match e {
            Error::NonFinite { what, .. } => Error::NonFinite {
                agent: AgentId::LEADER,
                iteration: it,
                what,
            },
            other => other,
        })?;
        check_stats(AgentId::LEADER, &stats).map_err(|e| e.at_iteration(it))?;
        report.leader_updates += 1;

        for (name, value) in summarize(&episodes, options.gamma)? {
            if !value.is_finite() {
                let agent = if name == "follower_return" {
                    AgentId::follower(0)
                } else {
                    AgentId::LEADER
                };
                return Err(Error::NonFinite {
                    agent,
                    iteration: it,
                    what: format!("{name} = {value}"),
                });
            }
            series
                .entry(name.clone())
                .or_insert_with(|| MetricSeries::new(name))
                .push(it as u64, value)?;
        }
        log::debug!("outer iteration {it} done");
    }
    report.series = series.into_values().collect();
    Ok(report)
}
