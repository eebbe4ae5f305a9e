//! Market entrance game with a duty on position changes.
//!
//! Every step each trader enters or stays out. Entrants share the spare
//! capacity `C − D`; staying out pays a flat `β`. Traders who switch
//! position pay a Tobin duty proportional to the size of their reward. The
//! leader sets the duty each step to keep demand steady.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{
    ActionSpace, ActionValue, Characteristics, EnvSpec, Environment, FollowerAction, Observation,
    ObservationLayout, StepOutcome,
};

pub const STAY_OUT: usize = 0;
pub const ENTER: usize = 1;

pub fn base_reward(entered: bool, demand: f64, capacity: f64, beta: f64, upsilon: f64) -> f64 {
    if entered {
        beta + upsilon * (capacity - demand)
    } else {
        beta
    }
}

/// `r* − |τ·r*|` for traders who changed position, `r*` otherwise.
pub fn tobin_adjusted_reward(r_star: f64, position_changed: bool, tau: f64, tau_max: f64) -> f64 {
    if position_changed {
        r_star - (tau.clamp(0.0, tau_max) * r_star).abs()
    } else {
        r_star
    }
}

/// Running mean and sample variance of demand (Welford).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DemandHistory {
    values: Vec<f64>,
    mean: f64,
    m2: f64,
}

impl DemandHistory {
    pub fn push(&mut self, d: f64) {
        self.values.push(d);
        let delta = d - self.mean;
        self.mean += delta / self.values.len() as f64;
        self.m2 += delta * (d - self.mean);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mean(&self) -> Option<f64> {
        (!self.values.is_empty()).then_some(self.mean)
    }

    /// Sample standard deviation (`T − 1` denominator); 0 with fewer than two
    /// samples.
    pub fn sample_std(&self) -> f64 {
        if self.values.len() < 2 {
            0.0
        } else {
            (self.m2.max(0.0) / (self.values.len() - 1) as f64).sqrt()
        }
    }
}

pub fn scenario_reward(history: &DemandHistory) -> f64 {
    -history.sample_std()
}

/// Mean over `t` of `|D_t − D_{t−1}| / D_{t−1}`, skipping zero denominators.
pub fn mean_abs_pct_change(series: &[f64]) -> Result<f64> {
    if series.len() < 2 {
        return Err(Error::param("percentage change needs at least two points"));
    }
    let mut total = 0.0;
    let mut used = 0usize;
    let mut skipped = 0usize;
    for w in series.windows(2) {
        if w[0] == 0.0 {
            skipped += 1;
            continue;
        }
        total += (w[1] - w[0]).abs() / w[0];
        used += 1;
    }
    if skipped > 0 {
        log::debug!("skipped {skipped} zero-demand denominators in percentage change");
    }
    Ok(if used == 0 { 0.0 } else { total / used as f64 })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EntryConfig {
    pub n_traders: usize,
    /// Absolute capacity `C`.
    pub capacity: f64,
    /// Capacity as a fraction of `n_traders`; overrides `capacity` when set.
    pub capacity_fraction: Option<f64>,
    pub beta: f64,
    pub upsilon: f64,
    pub tax_max: f64,
    pub tax_enabled: bool,
    pub horizon: usize,
}

impl Default for EntryConfig {
    fn default() -> Self {
        EntryConfig {
            n_traders: 20,
            capacity: 12.0,
            capacity_fraction: None,
            beta: 1.0,
            upsilon: 2.0,
            tax_max: 0.1,
            tax_enabled: true,
            horizon: 100,
        }
    }
}

impl EntryConfig {
    pub fn effective_capacity(&self) -> f64 {
        match self.capacity_fraction {
            Some(f) => f * self.n_traders as f64,
            None => self.capacity,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_traders == 0 {
            return Err(Error::config("n_traders must be at least 1"));
        }
        let c = self.effective_capacity();
        if !(0.0..=self.n_traders as f64).contains(&c) {
            return Err(Error::config(format!("capacity {c} outside [0, {}]", self.n_traders)));
        }
        if !(self.tax_max >= 0.0) {
            return Err(Error::config("tax_max must be non-negative"));
        }
        if self.horizon == 0 {
            return Err(Error::config("horizon must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct EntryGame {
    cfg: EntryConfig,
    capacity: f64,
    theta: Characteristics,
    positions: Vec<usize>,
    last_demand: f64,
    history: DemandHistory,
    step: usize,
}

impl EntryGame {
    pub fn new(cfg: EntryConfig) -> Result<Self> {
        cfg.validate()?;
        let capacity = cfg.effective_capacity();
        Ok(EntryGame {
            theta: Characteristics::at_lower(vec![(0.0, cfg.tax_max)])?,
            positions: vec![STAY_OUT; cfg.n_traders],
            last_demand: capacity,
            history: DemandHistory::default(),
            step: 0,
            capacity,
            cfg,
        })
    }

    pub fn config(&self) -> &EntryConfig {
        &self.cfg
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    pub fn history(&self) -> &DemandHistory {
        &self.history
    }

    pub fn tax(&self) -> f64 {
        self.theta.values()[0]
    }
}

impl Environment for EntryGame {
    fn spec(&self) -> EnvSpec {
        let n = self.cfg.n_traders as f64;
        EnvSpec {
            n_followers: self.cfg.n_traders,
            leader_obs: ObservationLayout::new(vec!["demand_std", "tax"]).with_scale(vec![1.0 / n, 10.0]),
            follower_obs: ObservationLayout::new(vec!["last_demand", "mean_demand", "last_action", "tax"])
                .with_scale(vec![1.0 / n, 1.0 / n, 1.0, 10.0]),
            leader_action: ActionSpace::Continuous(vec![(0.0, self.cfg.tax_max)]),
            follower_action: ActionSpace::Discrete(2),
            leader_action_period: 1,
            horizon: self.cfg.horizon,
        }
    }

    fn default_characteristics(&self) -> Characteristics {
        Characteristics::at_lower(vec![(0.0, self.cfg.tax_max)]).expect("static bounds are valid")
    }

    fn reset(&mut self, theta: &Characteristics, _seed: u64) -> Result<Vec<Observation>> {
        if self.cfg.tax_enabled {
            self.theta.set(theta.values())?;
        } else {
            self.theta = self.default_characteristics();
        }
        self.positions = vec![STAY_OUT; self.cfg.n_traders];
        self.last_demand = self.capacity;
        self.history = DemandHistory::default();
        self.step = 0;
        let mut obs = vec![self.leader_observe()];
        obs.extend(self.follower_observations());
        Ok(obs)
    }

    fn leader_observe(&self) -> Observation {
        Observation(vec![self.history.sample_std(), self.tax()])
    }

    fn leader_apply(&mut self, action: &ActionValue) -> Result<Characteristics> {
        if self.cfg.tax_enabled {
            let values = action
                .as_continuous()
                .ok_or_else(|| Error::param("duty expects a continuous action"))?;
            self.theta.set(values)?;
        }
        Ok(self.theta.clone())
    }

    fn follower_observations(&self) -> Vec<Observation> {
        let mean = self.history.mean().unwrap_or(self.capacity);
        let tax = self.tax();
        self.positions
            .iter()
            .map(|&a| Observation(vec![self.last_demand, mean, a as f64, tax]))
            .collect()
    }

    fn follower_step(&mut self, actions: &[FollowerAction]) -> Result<StepOutcome> {
        if actions.len() != self.cfg.n_traders {
            return Err(Error::param("one action per trader"));
        }
        let choices = actions
            .iter()
            .map(|a| match a.action.as_discrete() {
                Some(k) if k <= ENTER => Ok(k),
                _ => Err(Error::param(format!("invalid trader action {:?}", a.action))),
            })
            .collect::<Result<Vec<_>>>()?;
        let demand = choices.iter().filter(|&&k| k == ENTER).count() as f64;
        let tau = self.tax();
        let rewards = choices
            .iter()
            .zip(&self.positions)
            .map(|(&k, &prev)| {
                let r_star = base_reward(k == ENTER, demand, self.capacity, self.cfg.beta, self.cfg.upsilon);
                tobin_adjusted_reward(r_star, k != prev, tau, self.cfg.tax_max)
            })
            .collect();
        self.positions = choices;
        self.last_demand = demand;
        self.history.push(demand);
        self.step += 1;
        Ok(StepOutcome {
            observations: self.follower_observations(),
            follower_rewards: rewards,
            leader_reward: scenario_reward(&self.history),
            done: self.step >= self.cfg.horizon,
        })
    }

    fn follower_view(&self, _position: usize) -> Vec<f64> {
        vec![self.tax()]
    }

    fn characteristics(&self) -> &Characteristics {
        &self.theta
    }

    fn step_metrics(&self) -> Vec<(&'static str, f64)> {
        vec![("demand", self.last_demand), ("tax", self.tax())]
    }

    fn episode_metrics(&self) -> BTreeMap<&'static str, f64> {
        let mut m = BTreeMap::new();
        m.insert("demand_std", self.history.sample_std());
        if let Ok(v) = mean_abs_pct_change(self.history.values()) {
            m.insert("mapc", v);
        }
        m
    }
}
