//! Cobweb market with boundedly rational producers.
//!
//! Each step every producer predicts the price; supply follows the
//! predictions and the market clears at `p = (a − Σ S(p̂))/b + ε`. Producers
//! are paid for accuracy and charged `λ_i` per nat of information used. The
//! leader sets the processing penalties, either as a truncated normal
//! `(μ, σ)` from which each `λ_i` is drawn per episode, or one per producer,
//! and is rewarded for matching a target price series.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{
    ActionSpace, ActionValue, Actor, Characteristics, Decision, EnvSpec, Environment, FollowerAction,
    Observation, ObservationLayout, StepOutcome,
};
use crate::learners::info_cost::kl_information_cost;
use crate::rng::{self, StreamRng};

pub fn supply(prediction: f64, psi: f64, offset: f64) -> f64 {
    (psi * (prediction - offset)).tanh() + 1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CobwebParams {
    pub a: f64,
    pub b: f64,
    pub psi: f64,
    pub n_producers: usize,
    pub offset: f64,
}

impl Default for CobwebParams {
    fn default() -> Self {
        CobwebParams {
            a: 13.8,
            b: 1.5,
            psi: 2.0,
            n_producers: 6,
            offset: 6.0,
        }
    }
}

pub fn market_price(predictions: &[f64], params: &CobwebParams, noise: f64) -> f64 {
    let total: f64 = predictions.iter().map(|p| supply(*p, params.psi, params.offset)).sum();
    (params.a - total) / params.b + noise
}

/// Rational-expectations price: the fixed point of `p = (a − n·S(p))/b`.
pub fn equilibrium_price(params: &CobwebParams) -> Result<f64> {
    let n = params.n_producers as f64;
    let residual = |p: f64| p - (params.a - n * supply(p, params.psi, params.offset)) / params.b;
    let (mut lo, mut hi) = (0.0, params.a / params.b);
    let mut widened = 0;
    while residual(lo) * residual(hi) > 0.0 {
        if widened == 8 {
            return Err(Error::NoBracket { lo, hi });
        }
        let w = hi - lo;
        lo -= w;
        hi += w;
        widened += 1;
    }
    if residual(lo) == 0.0 {
        return Ok(lo);
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if residual(lo) * residual(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub fn producer_reward(price: f64, prediction: f64) -> f64 {
    (1300.0 - 260.0 * (price - prediction).powi(2)).max(0.0)
}

/// `r − λ·I(π, π₀)`.
pub fn penalized_producer_objective(reward: f64, lambda: f64, dist: &[f64], prior: &[f64]) -> Result<f64> {
    Ok(reward - lambda * kl_information_cost(dist, prior)?)
}

pub fn calibrator_reward(price: f64, target: f64) -> f64 {
    -(target - price).abs()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationMetrics {
    pub mae: f64,
    pub rmse: f64,
}

/// Errors between matched samples.
pub fn calibration_metrics(simulated: &[f64], target: &[f64]) -> Result<CalibrationMetrics> {
    if simulated.is_empty() || simulated.len() != target.len() {
        return Err(Error::param(format!(
            "cannot match {} simulated samples with {} targets",
            simulated.len(),
            target.len()
        )));
    }
    let n = simulated.len() as f64;
    let (abs, sq) = simulated
        .iter()
        .zip(target)
        .fold((0.0, 0.0), |(a, s), (x, y)| (a + (x - y).abs(), s + (x - y).powi(2)));
    Ok(CalibrationMetrics {
        mae: abs / n,
        rmse: (sq / n).sqrt(),
    })
}

/// Linear-interpolated quantile of sorted data at probability `q`.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    } else {
        sorted[i]
    }
}

/// Pairs the sorted simulated prices with target quantiles at the same
/// plotting positions, so two samples of different length can be compared
/// as distributions.
pub fn quantile_matched(simulated: &[f64], target: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if simulated.is_empty() || target.is_empty() {
        return Err(Error::param("quantile matching needs non-empty samples"));
    }
    let mut sim = simulated.to_vec();
    sim.sort_by(f64::total_cmp);
    let mut tgt = target.to_vec();
    tgt.sort_by(f64::total_cmp);
    let m = sim.len();
    let matched = (0..m)
        .map(|k| {
            let q = if m == 1 { 0.5 } else { k as f64 / (m - 1) as f64 };
            quantile_sorted(&tgt, q)
        })
        .collect();
    Ok((sim, matched))
}

/// Distributional error of `simulated` against `target`, averaged over
/// `resamples` bootstrap resamples of the target.
pub fn bootstrap_calibration(
    simulated: &[f64],
    target: &[f64],
    resamples: usize,
    seed: u64,
) -> Result<CalibrationMetrics> {
    if resamples == 0 {
        let (s, t) = quantile_matched(simulated, target)?;
        return calibration_metrics(&s, &t);
    }
    let mut r = rng::stream(seed);
    let mut acc = CalibrationMetrics { mae: 0.0, rmse: 0.0 };
    let mut boot = vec![0.0; target.len()];
    for _ in 0..resamples {
        for slot in &mut boot {
            *slot = target[r.random_range(0..target.len())];
        }
        let (s, t) = quantile_matched(simulated, &boot)?;
        let m = calibration_metrics(&s, &t)?;
        acc.mae += m.mae;
        acc.rmse += m.rmse;
    }
    acc.mae /= resamples as f64;
    acc.rmse /= resamples as f64;
    Ok(acc)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyMode {
    /// θ = (μ, σ); λ_i drawn per episode from N(μ, σ) truncated at 0.
    Distributional,
    /// θ = (λ_1, …, λ_n).
    Individual,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMatch {
    /// `−|φ_t − p_t|` every step against the target series in order.
    PerStep,
    /// Once per episode, the summed absolute error between the sorted
    /// episode prices and target quantiles.
    Distribution,
}

/// Draws from N(μ, σ) conditioned on being non-negative.
pub fn sample_truncated(mu: f64, sigma: f64, rng: &mut StreamRng) -> f64 {
    if sigma <= 0.0 {
        return mu.max(0.0);
    }
    let normal = Normal::new(mu, sigma).expect("sigma is positive");
    for _ in 0..10_000 {
        let x: f64 = normal.sample(rng);
        if x >= 0.0 {
            return x;
        }
    }
    0.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CobwebConfig {
    pub n_producers: usize,
    pub a: f64,
    pub b: f64,
    pub psi: f64,
    /// Supply-curve offset; the producer count when unset.
    pub supply_offset: Option<f64>,
    pub sigma_eps: f64,
    pub price_bins: usize,
    pub horizon: usize,
    pub mode: PenaltyMode,
    pub target_match: TargetMatch,
    pub lambda_max: f64,
    pub sigma_max: f64,
    /// Accuracy rewards are divided by this before the information cost is
    /// subtracted.
    pub reward_unit: f64,
}

impl Default for CobwebConfig {
    fn default() -> Self {
        CobwebConfig {
            n_producers: 6,
            a: 13.8,
            b: 1.5,
            psi: 2.0,
            supply_offset: None,
            sigma_eps: 0.1,
            price_bins: 21,
            horizon: 50,
            mode: PenaltyMode::Distributional,
            target_match: TargetMatch::Distribution,
            lambda_max: 30.0,
            sigma_max: 10.0,
            reward_unit: 1.0,
        }
    }
}

impl CobwebConfig {
    pub fn params(&self) -> CobwebParams {
        CobwebParams {
            a: self.a,
            b: self.b,
            psi: self.psi,
            n_producers: self.n_producers,
            offset: self.supply_offset.unwrap_or(self.n_producers as f64),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_producers == 0 {
            return Err(Error::config("n_producers must be at least 1"));
        }
        if !(self.b > 0.0 && self.psi > 0.0) {
            return Err(Error::config("b and psi must be positive"));
        }
        if !(self.sigma_eps >= 0.0) {
            return Err(Error::config("sigma_eps must be non-negative"));
        }
        if self.price_bins < 2 {
            return Err(Error::config("price_bins must be at least 2"));
        }
        if self.horizon == 0 {
            return Err(Error::config("horizon must be at least 1"));
        }
        if !(self.lambda_max >= 0.0 && self.sigma_max >= 0.0 && self.reward_unit > 0.0) {
            return Err(Error::config("lambda_max, sigma_max must be non-negative and reward_unit positive"));
        }
        Ok(())
    }

    pub fn theta_bounds(&self) -> Vec<(f64, f64)> {
        match self.mode {
            PenaltyMode::Distributional => vec![(0.0, self.lambda_max), (0.0, self.sigma_max)],
            PenaltyMode::Individual => vec![(0.0, self.lambda_max); self.n_producers],
        }
    }

    /// Centre of price bin `k` on `[0, a/b]`.
    pub fn bin_price(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * (self.a / self.b) / self.price_bins as f64
    }
}

#[derive(Clone, Debug)]
pub struct Cobweb {
    cfg: CobwebConfig,
    params: CobwebParams,
    theta: Characteristics,
    lambdas: Vec<f64>,
    target: Vec<f64>,
    predictions: Vec<f64>,
    prediction_sums: Vec<f64>,
    price: f64,
    price_sum: f64,
    prices: Vec<f64>,
    step: usize,
    rng: StreamRng,
}

impl Cobweb {
    pub fn new(cfg: CobwebConfig) -> Result<Self> {
        cfg.validate()?;
        let params = cfg.params();
        let theta = Characteristics::at_lower(cfg.theta_bounds())?;
        let n = cfg.n_producers;
        let start = cfg.a / (2.0 * cfg.b);
        Ok(Cobweb {
            params,
            theta,
            lambdas: vec![0.0; n],
            target: Vec::new(),
            predictions: vec![start; n],
            prediction_sums: vec![0.0; n],
            price: start,
            price_sum: 0.0,
            prices: Vec::new(),
            step: 0,
            rng: rng::stream(0),
            cfg,
        })
    }

    /// Sets the price series the leader tries to reproduce.
    pub fn with_target(mut self, target: Vec<f64>) -> Result<Self> {
        if target.is_empty() || target.iter().any(|x| !x.is_finite()) {
            return Err(Error::config("target series must be non-empty and finite"));
        }
        self.target = target;
        Ok(self)
    }

    pub fn config(&self) -> &CobwebConfig {
        &self.cfg
    }

    pub fn params(&self) -> &CobwebParams {
        &self.params
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    fn draw_lambdas(&mut self) {
        let t = self.theta.values().to_vec();
        self.lambdas = match self.cfg.mode {
            PenaltyMode::Distributional => (0..self.cfg.n_producers)
                .map(|_| sample_truncated(t[0], t[1], &mut self.rng))
                .collect(),
            PenaltyMode::Individual => t,
        };
    }

    fn mean_price(&self) -> f64 {
        if self.step == 0 {
            self.price
        } else {
            self.price_sum / self.step as f64
        }
    }

    fn mean_prediction(&self, i: usize) -> f64 {
        if self.step == 0 {
            self.predictions[i]
        } else {
            self.prediction_sums[i] / self.step as f64
        }
    }

    fn prediction_of(&self, action: &ActionValue) -> Result<f64> {
        match action {
            ActionValue::Discrete(k) if *k < self.cfg.price_bins => Ok(self.cfg.bin_price(*k)),
            ActionValue::Continuous(v) if v.len() == 1 => Ok(v[0]),
            other => Err(Error::param(format!("invalid producer action {other:?}"))),
        }
    }
}

impl Environment for Cobweb {
    fn spec(&self) -> EnvSpec {
        let n = self.cfg.n_producers;
        let mut leader_slots: Vec<&'static str> = vec!["prediction"; n];
        leader_slots.push("price");
        EnvSpec {
            n_followers: n,
            leader_obs: ObservationLayout::new(leader_slots).with_scale(vec![0.1; n + 1]),
            follower_obs: ObservationLayout::new(vec!["mean_price", "mean_prediction", "price", "lambda"])
                .with_scale(vec![0.1, 0.1, 0.1, 0.1]),
            leader_action: ActionSpace::Continuous(self.cfg.theta_bounds()),
            follower_action: ActionSpace::Discrete(self.cfg.price_bins),
            leader_action_period: self.cfg.horizon,
            horizon: self.cfg.horizon,
        }
    }

    fn default_characteristics(&self) -> Characteristics {
        Characteristics::at_lower(self.cfg.theta_bounds()).expect("static bounds are valid")
    }

    fn reset(&mut self, theta: &Characteristics, seed: u64) -> Result<Vec<Observation>> {
        self.rng = rng::stream(seed);
        self.theta.set(theta.values())?;
        let start = self.cfg.a / (2.0 * self.cfg.b);
        self.predictions = vec![start; self.cfg.n_producers];
        self.prediction_sums = vec![0.0; self.cfg.n_producers];
        self.price = start;
        self.price_sum = 0.0;
        self.prices.clear();
        self.step = 0;
        self.draw_lambdas();
        let mut obs = vec![self.leader_observe()];
        obs.extend(self.follower_observations());
        Ok(obs)
    }

    fn leader_observe(&self) -> Observation {
        let mut o = self.predictions.clone();
        o.push(self.price);
        Observation(o)
    }

    fn leader_apply(&mut self, action: &ActionValue) -> Result<Characteristics> {
        let values = action
            .as_continuous()
            .ok_or_else(|| Error::param("calibrator expects a continuous action"))?;
        self.theta.set(values)?;
        self.draw_lambdas();
        Ok(self.theta.clone())
    }

    fn follower_observations(&self) -> Vec<Observation> {
        (0..self.cfg.n_producers)
            .map(|i| Observation(vec![self.mean_price(), self.mean_prediction(i), self.price, self.lambdas[i]]))
            .collect()
    }

    fn follower_step(&mut self, actions: &[FollowerAction]) -> Result<StepOutcome> {
        if actions.len() != self.cfg.n_producers {
            return Err(Error::param("one prediction per producer"));
        }
        let predictions = actions
            .iter()
            .map(|a| self.prediction_of(&a.action))
            .collect::<Result<Vec<_>>>()?;
        let noise = if self.cfg.sigma_eps > 0.0 {
            Normal::new(0.0, self.cfg.sigma_eps)
                .expect("positive sigma")
                .sample(&mut self.rng)
        } else {
            0.0
        };
        let price = market_price(&predictions, &self.params, noise);
        let prior = 1.0 / self.cfg.price_bins as f64;
        let mut rewards = Vec::with_capacity(actions.len());
        for (i, (a, p_hat)) in actions.iter().zip(&predictions).enumerate() {
            let accuracy = producer_reward(price, *p_hat) / self.cfg.reward_unit;
            // single-sample estimate of I(π, π₀): ln(π(a)/π₀(a)) for the drawn bin
            let cost = match (&a.probs, a.action.as_discrete()) {
                (Some(probs), Some(k)) => (probs[k].max(f64::MIN_POSITIVE) / prior).ln(),
                _ => 0.0,
            };
            rewards.push(accuracy - self.lambdas[i] * cost);
        }
        let leader_reward = match self.cfg.target_match {
            TargetMatch::PerStep if !self.target.is_empty() => {
                calibrator_reward(price, self.target[self.step % self.target.len()])
            }
            _ => 0.0,
        };

        for (sum, p) in self.prediction_sums.iter_mut().zip(&predictions) {
            *sum += p;
        }
        self.predictions = predictions;
        self.price = price;
        self.price_sum += price;
        self.prices.push(price);
        self.step += 1;
        let done = self.step >= self.cfg.horizon;
        let leader_reward = if done && self.cfg.target_match == TargetMatch::Distribution && !self.target.is_empty() {
            let (sim, tgt) = quantile_matched(&self.prices, &self.target)?;
            -sim.iter().zip(&tgt).map(|(s, t)| (s - t).abs()).sum::<f64>()
        } else {
            leader_reward
        };
        Ok(StepOutcome {
            observations: self.follower_observations(),
            follower_rewards: rewards,
            leader_reward,
            done,
        })
    }

    fn follower_view(&self, position: usize) -> Vec<f64> {
        vec![self.lambdas[position]]
    }

    fn characteristics(&self) -> &Characteristics {
        &self.theta
    }

    fn step_metrics(&self) -> Vec<(&'static str, f64)> {
        let mean_pred = self.predictions.iter().sum::<f64>() / self.predictions.len() as f64;
        vec![("price", self.price), ("mean_prediction", mean_pred)]
    }

    fn episode_metrics(&self) -> BTreeMap<&'static str, f64> {
        let mut m = BTreeMap::new();
        let n = self.prices.len();
        if n > 0 {
            let mean = self.prices.iter().sum::<f64>() / n as f64;
            let var = self.prices.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n as f64;
            m.insert("price_mean", mean);
            m.insert("price_std", var.sqrt());
            m.insert("lambda_mean", self.lambdas.iter().sum::<f64>() / self.lambdas.len() as f64);
            if !self.target.is_empty() {
                if let Ok((s, t)) = quantile_matched(&self.prices, &self.target) {
                    if let Ok(c) = calibration_metrics(&s, &t) {
                        m.insert("calibration_mae", c.mae);
                        m.insert("calibration_rmse", c.rmse);
                    }
                }
            }
        }
        m
    }
}

/// Rational-expectations producer: always predicts the equilibrium price.
#[derive(Clone, Debug, PartialEq)]
pub struct RationalProducer {
    prediction: f64,
}

impl RationalProducer {
    pub fn new(params: &CobwebParams) -> Result<Self> {
        Ok(RationalProducer {
            prediction: equilibrium_price(params)?,
        })
    }

    pub fn prediction(&self) -> f64 {
        self.prediction
    }
}

impl Actor for RationalProducer {
    fn obs_dim(&self) -> usize {
        4
    }

    fn act(&self, _obs: &Observation, _rng: &mut StreamRng, _explore: bool) -> Decision {
        Decision::fixed(ActionValue::Continuous(vec![self.prediction]))
    }
}
