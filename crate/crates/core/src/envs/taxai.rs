//! Heterogeneous-household economy with a tax-setting government.
//!
//! Households choose a savings ratio and hours each step. Labour income is
//! `W·e·h` with the wage set by aggregate capital and labour; the government
//! levies HSV taxes on labour income and on beginning-of-period assets and
//! is rewarded with the sum of household utilities. Collected taxes leave the
//! economy; when the schedule implies a negative tax the household receives it.

use std::collections::BTreeMap;

use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{
    ActionSpace, ActionValue, Characteristics, EnvSpec, Environment, FollowerAction, Observation,
    ObservationLayout, StepOutcome,
};
use crate::metrics::gini;
use crate::rng::{self, StreamRng};

pub const CAPITAL_ELASTICITY: f64 = 1.0 / 3.0;

/// HSV tax `x − ((1−τ)/(1−ξ))·x^(1−ξ)`.
pub fn hsv_tax(x: f64, tau: f64, xi: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::param(format!("taxable amount must be non-negative, got {x}")));
    }
    if !(xi < 1.0) {
        return Err(Error::param(format!("progressivity must be below 1, got {xi}")));
    }
    Ok(x - (1.0 - tau) / (1.0 - xi) * x.powf(1.0 - xi))
}

/// `W = (1−α)(K/L)^α`.
pub fn wage_rate(capital: f64, labour: f64, alpha: f64) -> Result<f64> {
    if !(labour > 0.0) {
        return Err(Error::DegenerateEconomy(format!("aggregate labour is {labour}")));
    }
    if capital < 0.0 {
        return Err(Error::param("aggregate capital is negative"));
    }
    Ok((1.0 - alpha) * (capital / labour).powf(alpha))
}

pub fn household_reward(consumption: f64, hours: f64, zeta: f64) -> f64 {
    consumption.ln() - hours.powf(1.0 + zeta) / (1.0 + zeta)
}

pub fn government_reward(household_rewards: &[f64]) -> f64 {
    household_rewards.iter().sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaxAiConfig {
    pub n_households: usize,
    pub zeta: f64,
    pub rho: f64,
    pub prod_sigma: f64,
    pub horizon: usize,
    pub consumption_floor: f64,
    /// Force θ = 0 regardless of the government's action.
    pub free_market: bool,
    /// Upper bound on both progressivity parameters.
    pub xi_max: f64,
    /// Log-scale spread of initial wealth.
    pub initial_wealth_sigma: f64,
}

impl Default for TaxAiConfig {
    fn default() -> Self {
        TaxAiConfig {
            n_households: 10,
            zeta: 2.0,
            rho: 0.9,
            prod_sigma: 0.1,
            horizon: 100,
            consumption_floor: 1e-3,
            free_market: false,
            xi_max: 0.9,
            initial_wealth_sigma: 1.0,
        }
    }
}

impl TaxAiConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_households == 0 {
            return Err(Error::config("n_households must be at least 1"));
        }
        if !(self.zeta > 0.0) {
            return Err(Error::config("zeta must be positive"));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::config("rho must lie in [0, 1)"));
        }
        if !(self.prod_sigma >= 0.0 && self.initial_wealth_sigma >= 0.0) {
            return Err(Error::config("prod_sigma and initial_wealth_sigma must be non-negative"));
        }
        if !(self.consumption_floor > 0.0) {
            return Err(Error::config("consumption_floor must be positive"));
        }
        if !(0.0..1.0).contains(&self.xi_max) {
            return Err(Error::config("xi_max must lie in [0, 1)"));
        }
        if self.horizon == 0 {
            return Err(Error::config("horizon must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct HouseholdState {
    pub assets: f64,
    pub income: f64,
    pub productivity: f64,
    pub consumption: f64,
    pub hours: f64,
}

#[derive(Clone, Debug)]
pub struct TaxAi {
    cfg: TaxAiConfig,
    theta: Characteristics,
    households: Vec<HouseholdState>,
    wage: f64,
    tax_revenue: f64,
    step: usize,
    rng: StreamRng,
}

impl TaxAi {
    pub fn new(cfg: TaxAiConfig) -> Result<Self> {
        cfg.validate()?;
        let theta = Characteristics::at_lower(Self::bounds(&cfg))?;
        let n = cfg.n_households;
        Ok(TaxAi {
            cfg,
            theta,
            households: vec![HouseholdState::default(); n],
            wage: 0.0,
            tax_revenue: 0.0,
            step: 0,
            rng: rng::stream(0),
        })
    }

    fn bounds(cfg: &TaxAiConfig) -> Vec<(f64, f64)> {
        vec![(0.0, 1.0), (0.0, cfg.xi_max), (0.0, 1.0), (0.0, cfg.xi_max)]
    }

    pub fn config(&self) -> &TaxAiConfig {
        &self.cfg
    }

    pub fn households(&self) -> &[HouseholdState] {
        &self.households
    }

    /// Replaces the household states, e.g. to set up a specific economy.
    pub fn set_households(&mut self, households: Vec<HouseholdState>) -> Result<()> {
        if households.len() != self.cfg.n_households {
            return Err(Error::param("one state per household"));
        }
        self.households = households;
        Ok(())
    }

    pub fn wage(&self) -> f64 {
        self.wage
    }

    fn labour_and_capital(&self, hours: impl Iterator<Item = f64>) -> (f64, f64) {
        let labour = self.households.iter().zip(hours).map(|(s, h)| h * s.productivity).sum();
        let capital = self.households.iter().map(|s| s.assets).sum();
        (labour, capital)
    }

    fn wage_for(labour: f64, capital: f64) -> Result<f64> {
        if labour > 0.0 {
            wage_rate(capital, labour, CAPITAL_ELASTICITY)
        } else {
            // nobody works, so nobody is paid
            Ok(0.0)
        }
    }

    /// Applies one period of household choices `(savings ratio, hours)` and
    /// returns the household rewards.
    pub fn advance(&mut self, choices: &[(f64, f64)]) -> Result<Vec<f64>> {
        if choices.len() != self.households.len() {
            return Err(Error::param("one choice per household"));
        }
        let choices: Vec<(f64, f64)> = choices
            .iter()
            .map(|&(p, h)| (p.clamp(0.0, 1.0), h.clamp(0.0, 1.0)))
            .collect();
        let (labour, capital) = self.labour_and_capital(choices.iter().map(|c| c.1));
        let wage = Self::wage_for(labour, capital)?;
        let t = self.theta.values();
        let (tau_i, xi_i, tau_a, xi_a) = (t[0], t[1], t[2], t[3]);
        let floor = self.cfg.consumption_floor;
        let shock = Normal::new(0.0, self.cfg.prod_sigma).map_err(|e| Error::param(e.to_string()))?;
        let mut rewards = Vec::with_capacity(choices.len());
        let mut revenue = 0.0;
        for (s, &(p, h)) in self.households.iter_mut().zip(&choices) {
            let income = wage * s.productivity * h;
            let tax = hsv_tax(income, tau_i, xi_i)? + hsv_tax(s.assets, tau_a, xi_a)?;
            revenue += tax;
            let disposable = (s.assets + income - tax).max(floor);
            let consumption = ((1.0 - p) * disposable).max(floor);
            s.assets = p * disposable;
            s.income = income;
            s.consumption = consumption;
            s.hours = h;
            rewards.push(household_reward(consumption, h, self.cfg.zeta));
            let log_e = self.cfg.rho * s.productivity.ln() + shock.sample(&mut self.rng);
            s.productivity = log_e.exp();
        }
        self.wage = wage;
        self.tax_revenue = revenue;
        Ok(rewards)
    }

    fn observation_for(&self, s: &HouseholdState) -> Observation {
        let mut o = vec![self.wage, s.assets, s.income, s.productivity];
        o.extend_from_slice(self.theta.values());
        Observation(o)
    }

    fn mean_of(&self, f: impl Fn(&HouseholdState) -> f64) -> f64 {
        self.households.iter().map(f).sum::<f64>() / self.households.len() as f64
    }
}

impl Environment for TaxAi {
    fn spec(&self) -> EnvSpec {
        let theta_slots = ["tau_income", "xi_income", "tau_assets", "xi_assets"];
        let mut follower_slots = vec!["wage", "assets", "income", "productivity"];
        follower_slots.extend(theta_slots);
        let mut leader_slots = vec!["mean_assets", "mean_income", "mean_productivity"];
        leader_slots.extend(theta_slots);
        EnvSpec {
            n_followers: self.cfg.n_households,
            leader_obs: ObservationLayout::new(leader_slots).with_scale(vec![0.2, 0.5, 1.0, 1.0, 1.0, 1.0, 1.0]),
            follower_obs: ObservationLayout::new(follower_slots)
                .with_scale(vec![1.0, 0.2, 0.5, 1.0, 1.0, 1.0, 1.0, 1.0]),
            leader_action: ActionSpace::Continuous(Self::bounds(&self.cfg)),
            follower_action: ActionSpace::Continuous(vec![(0.0, 1.0), (0.0, 1.0)]),
            leader_action_period: self.cfg.horizon,
            horizon: self.cfg.horizon,
        }
    }

    fn default_characteristics(&self) -> Characteristics {
        Characteristics::at_lower(Self::bounds(&self.cfg)).expect("static bounds are valid")
    }

    fn reset(&mut self, theta: &Characteristics, seed: u64) -> Result<Vec<Observation>> {
        self.rng = rng::stream(seed);
        if !self.cfg.free_market {
            self.theta.set(theta.values())?;
        } else {
            self.theta = self.default_characteristics();
        }
        let stationary = self.cfg.prod_sigma / (1.0 - self.cfg.rho * self.cfg.rho).sqrt();
        let prod = LogNormal::new(0.0, stationary).map_err(|e| Error::param(e.to_string()))?;
        let wealth = LogNormal::new(0.0, self.cfg.initial_wealth_sigma).map_err(|e| Error::param(e.to_string()))?;
        for s in &mut self.households {
            *s = HouseholdState {
                assets: wealth.sample(&mut self.rng),
                income: 0.0,
                productivity: prod.sample(&mut self.rng),
                consumption: 0.0,
                hours: 0.5,
            };
        }
        let (labour, capital) = self.labour_and_capital(std::iter::repeat(0.5));
        self.wage = Self::wage_for(labour, capital)?;
        self.tax_revenue = 0.0;
        self.step = 0;
        let mut obs = vec![self.leader_observe()];
        obs.extend(self.follower_observations());
        Ok(obs)
    }

    fn leader_observe(&self) -> Observation {
        let mut o = vec![
            self.mean_of(|s| s.assets),
            self.mean_of(|s| s.income),
            self.mean_of(|s| s.productivity),
        ];
        o.extend_from_slice(self.theta.values());
        Observation(o)
    }

    fn leader_apply(&mut self, action: &ActionValue) -> Result<Characteristics> {
        if !self.cfg.free_market {
            let values = action
                .as_continuous()
                .ok_or_else(|| Error::param("tax policy expects a continuous action"))?;
            self.theta.set(values)?;
        }
        Ok(self.theta.clone())
    }

    fn follower_observations(&self) -> Vec<Observation> {
        self.households.iter().map(|s| self.observation_for(s)).collect()
    }

    fn follower_step(&mut self, actions: &[FollowerAction]) -> Result<StepOutcome> {
        let choices = actions
            .iter()
            .map(|a| match a.action.as_continuous() {
                Some([p, h]) => Ok((*p, *h)),
                _ => Err(Error::param("household action must be (savings ratio, hours)")),
            })
            .collect::<Result<Vec<_>>>()?;
        let rewards = self.advance(&choices)?;
        self.step += 1;
        Ok(StepOutcome {
            observations: self.follower_observations(),
            leader_reward: government_reward(&rewards),
            follower_rewards: rewards,
            done: self.step >= self.cfg.horizon,
        })
    }

    fn follower_view(&self, _position: usize) -> Vec<f64> {
        self.theta.values().to_vec()
    }

    fn characteristics(&self) -> &Characteristics {
        &self.theta
    }

    fn step_metrics(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("wage", self.wage),
            ("mean_assets", self.mean_of(|s| s.assets)),
            ("mean_consumption", self.mean_of(|s| s.consumption)),
            ("mean_hours", self.mean_of(|s| s.hours)),
            ("tax_revenue", self.tax_revenue),
        ]
    }

    fn episode_metrics(&self) -> BTreeMap<&'static str, f64> {
        let assets: Vec<f64> = self.households.iter().map(|s| s.assets).collect();
        let income: Vec<f64> = self.households.iter().map(|s| s.income).collect();
        let mut m = BTreeMap::new();
        if let Ok(g) = gini(&assets) {
            m.insert("gini_assets", g);
        }
        if let Ok(g) = gini(&income) {
            m.insert("gini_income", g);
        }
        m
    }
}
