//! Market maker facing zero-intelligence liquidity takers.
//!
//! The market maker quotes a half-spread around an exogenous mean-reverting
//! price. Each liquidity taker is a buyer or a seller for the whole episode
//! and trades one unit when its private valuation crosses the quote. The
//! reward mixes profit and market share with a preference `ω` that the
//! leader samples and the market maker observes.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{
    ActionSpace, ActionValue, Characteristics, EnvSpec, Environment, FollowerAction, Observation,
    ObservationLayout, StepOutcome,
};
use crate::learners::maxent::PreferenceGrid;
use crate::rng::{self, StreamRng};

/// `max(0, κ·p₀ + (1−κ)·p_prev + shock)`.
pub fn price_step(p_prev: f64, p0: f64, kappa: f64, shock: f64) -> f64 {
    (kappa * p0 + (1.0 - kappa) * p_prev + shock).max(0.0)
}

pub fn quote_prices(price: f64, half_spread: f64) -> (f64, f64) {
    (price - half_spread, price + half_spread)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Buyer,
    Seller,
}

/// Whether a liquidity taker trades one unit against the quotes.
pub fn lt_decide(side: Side, valuation: f64, bid: f64, ask: f64) -> bool {
    match side {
        Side::Buyer => valuation > ask,
        Side::Seller => valuation < bid,
    }
}

pub fn pnl(q_bid: u32, q_ask: u32, p_prev: f64, bid: f64, ask: f64) -> f64 {
    q_bid as f64 * (p_prev - bid) + q_ask as f64 * (ask - p_prev)
}

/// `ω·PnL/n + (1−ω)·m/n`.
pub fn mm_reward(omega: f64, pnl: f64, trades: u32, n_lts: usize) -> f64 {
    let n = n_lts as f64;
    omega * pnl / n + (1.0 - omega) * trades as f64 / n
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resample {
    PerEpisode,
    PerStep,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MmConfig {
    pub p0: f64,
    pub kappa: f64,
    pub sigma_shock: f64,
    pub valuation_std: f64,
    pub n_lts: usize,
    pub half_spread_max: f64,
    pub horizon: usize,
    pub omega_grid: PreferenceGrid,
    pub resample: Resample,
    /// Pin ω to this value whatever the leader does.
    pub baseline_fixed_omega: Option<f64>,
}

impl Default for MmConfig {
    fn default() -> Self {
        MmConfig {
            p0: 100.0,
            kappa: 0.01,
            sigma_shock: 1.0,
            valuation_std: 5.0,
            n_lts: 20,
            half_spread_max: 10.0,
            horizon: 100,
            omega_grid: PreferenceGrid::default(),
            resample: Resample::PerEpisode,
            baseline_fixed_omega: None,
        }
    }
}

impl MmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa <= 1.0) {
            return Err(Error::config("kappa must lie in (0, 1]"));
        }
        if !(self.sigma_shock >= 0.0 && self.valuation_std >= 0.0) {
            return Err(Error::config("sigma_shock and valuation_std must be non-negative"));
        }
        if !(self.p0 > 0.0) {
            return Err(Error::config("p0 must be positive"));
        }
        if self.n_lts == 0 || self.horizon == 0 {
            return Err(Error::config("n_lts and horizon must be at least 1"));
        }
        if !(self.half_spread_max > 0.0) {
            return Err(Error::config("half_spread_max must be positive"));
        }
        if let Some(w) = self.baseline_fixed_omega {
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::config("baseline_fixed_omega must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MmState {
    pub omega: f64,
    pub half_spread: f64,
    pub q_bid: u32,
    pub q_ask: u32,
    pub pnl: f64,
    pub reward: f64,
}

#[derive(Clone, Debug)]
pub struct MarketMaking {
    cfg: MmConfig,
    theta: Characteristics,
    sides: Vec<Side>,
    price: f64,
    prev_price: f64,
    state: MmState,
    step: usize,
    rng: StreamRng,
}

impl MarketMaking {
    pub fn new(cfg: MmConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.n_lts;
        Ok(MarketMaking {
            theta: Characteristics::at_lower(vec![(0.0, 1.0)])?,
            sides: vec![Side::Buyer; n],
            price: cfg.p0,
            prev_price: cfg.p0,
            state: MmState::default(),
            step: 0,
            rng: rng::stream(0),
            cfg,
        })
    }

    pub fn config(&self) -> &MmConfig {
        &self.cfg
    }

    pub fn omega(&self) -> f64 {
        self.theta.values()[0]
    }

    pub fn price(&self) -> f64 {
        self.price
    }

    pub fn state(&self) -> &MmState {
        &self.state
    }

    pub fn sides(&self) -> &[Side] {
        &self.sides
    }

    fn set_omega(&mut self, omega: f64) -> Result<()> {
        let w = self.cfg.baseline_fixed_omega.unwrap_or(omega);
        self.theta.set(&[w])?;
        self.state.omega = w;
        Ok(())
    }
}

impl Environment for MarketMaking {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            n_followers: 1,
            leader_obs: ObservationLayout::new(vec!["omega"]),
            follower_obs: ObservationLayout::new(vec!["relative_price", "omega"]),
            leader_action: ActionSpace::Discrete(self.cfg.omega_grid.len()),
            follower_action: ActionSpace::Continuous(vec![(0.0, self.cfg.half_spread_max)]),
            leader_action_period: match self.cfg.resample {
                Resample::PerEpisode => self.cfg.horizon,
                Resample::PerStep => 1,
            },
            horizon: self.cfg.horizon,
        }
    }

    fn default_characteristics(&self) -> Characteristics {
        let w = self.cfg.baseline_fixed_omega.unwrap_or(0.0);
        Characteristics::new(vec![w], vec![(0.0, 1.0)]).expect("static bounds are valid")
    }

    fn reset(&mut self, theta: &Characteristics, seed: u64) -> Result<Vec<Observation>> {
        self.rng = rng::stream(seed);
        self.state = MmState::default();
        self.set_omega(theta.values()[0])?;
        let rng = &mut self.rng;
        self.sides = (0..self.cfg.n_lts)
            .map(|_| if rng.random_bool(0.5) { Side::Buyer } else { Side::Seller })
            .collect();
        self.price = self.cfg.p0;
        self.prev_price = self.cfg.p0;
        self.step = 0;
        let mut obs = vec![self.leader_observe()];
        obs.extend(self.follower_observations());
        Ok(obs)
    }

    fn leader_observe(&self) -> Observation {
        Observation(vec![self.omega()])
    }

    fn leader_apply(&mut self, action: &ActionValue) -> Result<Characteristics> {
        let omega = match action {
            ActionValue::Discrete(k) => self
                .cfg
                .omega_grid
                .get(*k)
                .ok_or_else(|| Error::param(format!("preference index {k} outside the grid")))?,
            ActionValue::Continuous(v) if v.len() == 1 => v[0],
            other => return Err(Error::param(format!("invalid preference action {other:?}"))),
        };
        self.set_omega(omega)?;
        Ok(self.theta.clone())
    }

    fn follower_observations(&self) -> Vec<Observation> {
        vec![Observation(vec![self.price / self.cfg.p0, self.omega()])]
    }

    fn follower_step(&mut self, actions: &[FollowerAction]) -> Result<StepOutcome> {
        let hs = match actions {
            [a] => match a.action.as_continuous() {
                Some([hs]) => hs.clamp(0.0, self.cfg.half_spread_max),
                _ => return Err(Error::param("market maker action must be one half-spread")),
            },
            _ => return Err(Error::param("market making has exactly one follower")),
        };
        let (bid, ask) = quote_prices(self.price, hs);
        let valuation = Normal::new(self.cfg.p0, self.cfg.valuation_std).map_err(|e| Error::param(e.to_string()))?;
        let (mut q_bid, mut q_ask) = (0u32, 0u32);
        for side in &self.sides {
            let v = valuation.sample(&mut self.rng);
            if lt_decide(*side, v, bid, ask) {
                match side {
                    Side::Buyer => q_ask += 1,
                    Side::Seller => q_bid += 1,
                }
            }
        }
        let profit = pnl(q_bid, q_ask, self.prev_price, bid, ask);
        let omega = self.omega();
        let reward = mm_reward(omega, profit, q_bid + q_ask, self.cfg.n_lts);
        self.state = MmState {
            omega,
            half_spread: hs,
            q_bid,
            q_ask,
            pnl: profit,
            reward,
        };
        let shock = Normal::new(0.0, self.cfg.sigma_shock)
            .map_err(|e| Error::param(e.to_string()))?
            .sample(&mut self.rng);
        self.prev_price = self.price;
        self.price = price_step(self.price, self.cfg.p0, self.cfg.kappa, shock);
        self.step += 1;
        Ok(StepOutcome {
            observations: self.follower_observations(),
            follower_rewards: vec![reward],
            leader_reward: 0.0,
            done: self.step >= self.cfg.horizon,
        })
    }

    fn follower_view(&self, _position: usize) -> Vec<f64> {
        vec![self.omega()]
    }

    fn characteristics(&self) -> &Characteristics {
        &self.theta
    }

    fn step_metrics(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("spread", 2.0 * self.state.half_spread),
            ("trades", (self.state.q_bid + self.state.q_ask) as f64),
            ("pnl", self.state.pnl),
            ("reward", self.state.reward),
            ("omega", self.state.omega),
            ("price", self.price),
        ]
    }

    fn episode_metrics(&self) -> BTreeMap<&'static str, f64> {
        let mut m = BTreeMap::new();
        m.insert("episode_omega", self.omega());
        m
    }
}
