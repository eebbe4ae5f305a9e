//! Proximal policy optimisation with generalised advantage estimation.
//!
//! The policy objective combines the clipped surrogate with an adaptive KL
//! penalty. The value function is a separate network of the same shape.
//! When KL adaptation is on, an update also stops early (reverting the last
//! minibatch step) if the batch KL to the pre-update policy passes four times
//! the target.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::nn::{Adam, Mlp};
use super::policy::{Dist, Head, PolicySpec};
use crate::error::{Error, Result};
use crate::game::{ActionSpace, Actor, AgentId, Decision, Learner, Observation, Trajectory, UpdateStats};
use crate::rng::{self, tag, StreamRng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub learning_rate: f64,
    /// Value-network step size; the policy rate when unset.
    pub vf_learning_rate: Option<f64>,
    pub kl_coeff: f64,
    pub kl_target: f64,
    pub adaptive_kl: bool,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_ratio: f64,
    pub epochs_per_update: usize,
    pub minibatch_size: usize,
    pub hidden: Vec<usize>,
    pub entropy_coeff: f64,
    pub normalize_advantages: bool,
    /// Rewards are multiplied by this before advantage estimation.
    pub reward_scale: f64,
    /// Global gradient-norm cap for the policy, off when unset.
    pub max_grad_norm: Option<f64>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            learning_rate: 5e-5,
            vf_learning_rate: None,
            kl_coeff: 0.2,
            kl_target: 0.01,
            adaptive_kl: true,
            gamma: 0.99,
            gae_lambda: 1.0,
            clip_ratio: 0.2,
            epochs_per_update: 10,
            minibatch_size: 128,
            hidden: vec![256, 256],
            entropy_coeff: 0.0,
            normalize_advantages: true,
            reward_scale: 1.0,
            max_grad_norm: None,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("kl_target", self.kl_target),
            ("clip_ratio", self.clip_ratio),
            ("reward_scale", self.reward_scale),
            ("vf_learning_rate", self.vf_learning_rate.unwrap_or(1.0)),
            ("max_grad_norm", self.max_grad_norm.unwrap_or(1.0)),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.kl_coeff.is_finite() && self.kl_coeff >= 0.0) {
            return Err(Error::config("kl_coeff must be non-negative"));
        }
        if !(self.entropy_coeff.is_finite() && self.entropy_coeff >= 0.0) {
            return Err(Error::config("entropy_coeff must be non-negative"));
        }
        for (name, v) in [("gamma", self.gamma), ("gae_lambda", self.gae_lambda)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if self.epochs_per_update == 0 || self.minibatch_size == 0 {
            return Err(Error::config("epochs_per_update and minibatch_size must be at least 1"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::config("hidden layer sizes must be positive"));
        }
        Ok(())
    }
}

/// `A_t = Σ_l (γλ)^l δ_{t+l}` with `δ_t = r_t + γ v_{t+1} − v_t`; `values`
/// carries the bootstrap value as its last entry.
pub fn gae_advantages(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> Result<Vec<f64>> {
    if values.len() != rewards.len() + 1 {
        return Err(Error::param(format!(
            "{} values for {} rewards; expected one extra bootstrap value",
            values.len(),
            rewards.len()
        )));
    }
    Ok(gae_with_discounts(rewards, values, &vec![gamma; rewards.len()], lambda))
}

/// GAE where step `t` discounts the next value by `discounts[t]`, used when a
/// decision spans several environment steps.
fn gae_with_discounts(rewards: &[f64], values: &[f64], discounts: &[f64], lambda: f64) -> Vec<f64> {
    let mut adv = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        let delta = rewards[t] + discounts[t] * values[t + 1] - values[t];
        acc = delta + discounts[t] * lambda * acc;
        adv[t] = acc;
    }
    adv
}

/// One decision prepared for the policy update.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicySample {
    pub observation: Vec<f64>,
    pub sample: Vec<f64>,
    pub old_log_prob: f64,
    pub advantage: f64,
    pub value_target: f64,
}

/// Loss weights for [`surrogate_loss`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurrogateCoeffs {
    pub clip_ratio: f64,
    pub kl_coeff: f64,
    pub entropy_coeff: f64,
}

/// Mean over `samples` of `−min(ρA, clip(ρ)A) + β·KL(old‖new) − c·H(new)`
/// and its gradient with respect to the flat parameters of `policy`.
/// `old` holds the pre-update distribution for each sample.
pub fn surrogate_loss(
    policy: &PolicySpec,
    samples: &[PolicySample],
    old: &[Dist],
    coeffs: SurrogateCoeffs,
) -> (f64, Vec<f64>) {
    let n_net = policy.net().n_params();
    let mut grad = vec![0.0; policy.n_params()];
    if samples.is_empty() {
        return (0.0, grad);
    }
    let scale = 1.0 / samples.len() as f64;
    let mut loss = 0.0;
    let (lo, hi) = (1.0 - coeffs.clip_ratio, 1.0 + coeffs.clip_ratio);
    for (s, old_dist) in samples.iter().zip(old) {
        let cache = policy.net().forward_cached(&policy.scale_input(&s.observation));
        let dist = policy.dist_from_output(cache.output());
        let lp = dist.log_prob(&s.sample);
        let ratio = (lp - s.old_log_prob).exp();
        let a = s.advantage;
        let unclipped = ratio * a;
        let clipped = ratio.clamp(lo, hi) * a;
        let kl = old_dist.kl(&dist);
        let entropy = dist.entropy();
        loss += scale * (-unclipped.min(clipped) + coeffs.kl_coeff * kl - coeffs.entropy_coeff * entropy);
        // d(−surrogate)/d(log π) when the unclipped branch is the minimum
        let g_lp = if unclipped <= clipped { -a * ratio } else { 0.0 };

        let mut g_out = vec![0.0; policy.net().output_dim()];
        match (&dist, old_dist) {
            (Dist::Categorical { probs }, Dist::Categorical { probs: p_old }) => {
                let chosen = s.sample[0] as usize;
                for j in 0..probs.len() {
                    let onehot = if j == chosen { 1.0 } else { 0.0 };
                    let d_lp = onehot - probs[j];
                    let d_kl = probs[j] - p_old[j];
                    let ln_p = if probs[j] > 0.0 { probs[j].ln() } else { 0.0 };
                    let d_h = -probs[j] * (ln_p + entropy);
                    g_out[j] = scale * (g_lp * d_lp + coeffs.kl_coeff * d_kl - coeffs.entropy_coeff * d_h);
                }
            }
            (
                Dist::Gaussian { mean, log_std },
                Dist::Gaussian {
                    mean: m_old,
                    log_std: s_old,
                },
            ) => {
                for j in 0..mean.len() {
                    let var = (2.0 * log_std[j]).exp();
                    let var_old = (2.0 * s_old[j]).exp();
                    let diff = s.sample[j] - mean[j];
                    let d_lp_m = diff / var;
                    let d_lp_s = diff * diff / var - 1.0;
                    let d_kl_m = (mean[j] - m_old[j]) / var;
                    let d_kl_s = 1.0 - (var_old + (m_old[j] - mean[j]).powi(2)) / var;
                    g_out[j] = scale * (g_lp * d_lp_m + coeffs.kl_coeff * d_kl_m);
                    grad[n_net + j] +=
                        scale * (g_lp * d_lp_s + coeffs.kl_coeff * d_kl_s - coeffs.entropy_coeff);
                }
            }
            _ => unreachable!("head kind is fixed per policy"),
        }
        policy.net().backward(&cache, &g_out, &mut grad[..n_net]);
    }
    (loss, grad)
}

fn mean_kl(policy: &PolicySpec, samples: &[PolicySample], old: &[Dist]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples
        .iter()
        .zip(old)
        .map(|(s, o)| o.kl(&policy.forward(&s.observation)))
        .sum::<f64>()
        / samples.len() as f64
}

fn clip_norm(grad: &mut [f64], max_norm: Option<f64>) {
    if let Some(max) = max_norm {
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm > max {
            let f = max / norm;
            grad.iter_mut().for_each(|g| *g *= f);
        }
    }
}

/// PPO learner owning a policy, a value network and their optimisers.
#[derive(Clone, Debug)]
pub struct PpoLearner {
    cfg: PpoConfig,
    policy: PolicySpec,
    value: Mlp,
    policy_opt: Adam,
    value_opt: Adam,
    kl_coeff: f64,
    rng: StreamRng,
    updates: usize,
}

impl PpoLearner {
    /// `input_scale` multiplies observations elementwise before both networks.
    pub fn new(action_space: &ActionSpace, input_scale: Vec<f64>, cfg: PpoConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let obs_dim = input_scale.len();
        let mut init = rng::stream(rng::derive(seed, &[tag::INIT]));
        let policy = PolicySpec::new(obs_dim, &cfg.hidden, Head::for_space(action_space), input_scale, &mut init)?;
        let value = Mlp::new(obs_dim, &cfg.hidden, 1, 1.0, &mut init);
        let policy_opt = Adam::new(policy.n_params(), cfg.learning_rate);
        let value_opt = Adam::new(value.n_params(), cfg.vf_learning_rate.unwrap_or(cfg.learning_rate));
        Ok(PpoLearner {
            kl_coeff: cfg.kl_coeff,
            rng: rng::stream(rng::derive(seed, &[tag::LEARNER])),
            cfg,
            policy,
            value,
            policy_opt,
            value_opt,
            updates: 0,
        })
    }

    pub fn policy(&self) -> &PolicySpec {
        &self.policy
    }

    pub fn config(&self) -> &PpoConfig {
        &self.cfg
    }

    /// Current (adapted) KL penalty coefficient.
    pub fn kl_coeff(&self) -> f64 {
        self.kl_coeff
    }

    pub fn value_of(&self, obs: &[f64]) -> f64 {
        self.value.forward(&self.policy.scale_input(obs))[0]
    }

    /// Turns trajectories into per-decision samples. A decision's reward is
    /// the discounted sum of rewards until the next decision, and the next
    /// value is discounted by γ to the number of steps in between.
    pub fn prepare(&self, batch: &[&Trajectory]) -> Result<Vec<PolicySample>> {
        let gamma = self.cfg.gamma;
        let mut out = Vec::new();
        for traj in batch {
            let idx: Vec<usize> = traj
                .transitions
                .iter()
                .enumerate()
                .filter(|(_, t)| t.action.is_some())
                .map(|(i, _)| i)
                .collect();
            if idx.is_empty() {
                continue;
            }
            let mut rewards = Vec::with_capacity(idx.len());
            let mut discounts = Vec::with_capacity(idx.len());
            for (j, &start) in idx.iter().enumerate() {
                let end = idx.get(j + 1).copied().unwrap_or(traj.transitions.len());
                let mut r = 0.0;
                let mut g = 1.0;
                for t in &traj.transitions[start..end] {
                    r += g * t.reward * self.cfg.reward_scale;
                    g *= gamma;
                }
                rewards.push(r);
                discounts.push(g);
            }
            let mut values: Vec<f64> = idx
                .iter()
                .map(|&i| self.value_of(traj.transitions[i].observation.as_slice()))
                .collect();
            values.push(0.0);
            let adv = gae_with_discounts(&rewards, &values, &discounts, self.cfg.gae_lambda);
            for (j, &i) in idx.iter().enumerate() {
                let t = &traj.transitions[i];
                let sample = if t.sample.is_empty() {
                    match t.action.as_ref().and_then(|a| a.as_discrete()) {
                        Some(k) => vec![k as f64],
                        None => return Err(Error::param("continuous transition without a policy sample")),
                    }
                } else {
                    t.sample.clone()
                };
                out.push(PolicySample {
                    observation: t.observation.0.clone(),
                    sample,
                    old_log_prob: t.log_prob,
                    advantage: adv[j],
                    value_target: adv[j] + values[j],
                });
            }
        }
        Ok(out)
    }

    /// Runs the configured epochs of minibatch updates on prepared samples.
    pub fn update_on_samples(&mut self, mut samples: Vec<PolicySample>) -> Result<UpdateStats> {
        self.updates += 1;
        if samples.is_empty() {
            return Ok(UpdateStats::default());
        }
        if samples
            .iter()
            .any(|s| !s.advantage.is_finite() || !s.value_target.is_finite() || !s.old_log_prob.is_finite())
        {
            return Err(non_finite("advantage or log-probability in the batch"));
        }
        if self.cfg.normalize_advantages && samples.len() > 1 {
            let n = samples.len() as f64;
            let mean = samples.iter().map(|s| s.advantage).sum::<f64>() / n;
            let var = samples.iter().map(|s| (s.advantage - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            for s in &mut samples {
                s.advantage = if sd > 1e-8 { (s.advantage - mean) / sd } else { s.advantage - mean };
            }
        }
        let old: Vec<Dist> = samples.iter().map(|s| self.policy.forward(&s.observation)).collect();
        let coeffs = SurrogateCoeffs {
            clip_ratio: self.cfg.clip_ratio,
            kl_coeff: self.kl_coeff,
            entropy_coeff: self.cfg.entropy_coeff,
        };
        let guard = 4.0 * self.cfg.kl_target;
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mb = self.cfg.minibatch_size.min(samples.len());
        let mut stopped = false;

        // The guard is checked on each minibatch after its step, and on the
        // whole batch at the end of every epoch; a full-batch violation rolls
        // back to the start of that epoch.
        'epochs: for _ in 0..self.cfg.epochs_per_update {
            order.shuffle(&mut self.rng);
            let epoch_start = self.cfg.adaptive_kl.then(|| (self.policy.params(), self.policy_opt.clone()));
            for chunk in order.chunks(mb) {
                let batch: Vec<PolicySample> = chunk.iter().map(|&i| samples[i].clone()).collect();
                let batch_old: Vec<Dist> = chunk.iter().map(|&i| old[i].clone()).collect();

                self.value_step(&batch);

                let (loss, mut grad) = surrogate_loss(&self.policy, &batch, &batch_old, coeffs);
                if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    return Err(non_finite(format!("policy loss {loss}")));
                }
                clip_norm(&mut grad, self.cfg.max_grad_norm);
                let saved = (self.cfg.adaptive_kl).then(|| (self.policy.params(), self.policy_opt.clone()));
                {
                    let mut params = self.policy.params();
                    self.policy_opt.step(&mut params, &grad);
                    self.policy.set_params(&params);
                }
                if let Some((params, opt)) = saved {
                    if mean_kl(&self.policy, &batch, &batch_old) > guard {
                        self.policy.set_params(&params);
                        self.policy_opt = opt;
                        stopped = true;
                        break 'epochs;
                    }
                }
            }
            if let Some((params, opt)) = epoch_start {
                if mean_kl(&self.policy, &samples, &old) > guard {
                    self.policy.set_params(&params);
                    self.policy_opt = opt;
                    stopped = true;
                    break 'epochs;
                }
            }
        }

        let kl = mean_kl(&self.policy, &samples, &old);
        if !kl.is_finite() {
            return Err(non_finite("KL after update"));
        }
        let (lo, hi) = (1.0 - self.cfg.clip_ratio, 1.0 + self.cfg.clip_ratio);
        let clipped = samples
            .iter()
            .filter(|s| {
                let r = (self.policy.forward(&s.observation).log_prob(&s.sample) - s.old_log_prob).exp();
                r < lo || r > hi
            })
            .count();
        if self.cfg.adaptive_kl {
            if kl > 2.0 * self.cfg.kl_target {
                self.kl_coeff *= 2.0;
            } else if kl < 0.5 * self.cfg.kl_target {
                self.kl_coeff *= 0.5;
            }
        }
        if stopped {
            log::debug!("update {} stopped early at KL {kl:.4}", self.updates);
        }
        Ok(UpdateStats {
            mean_kl: kl,
            clip_fraction: clipped as f64 / samples.len() as f64,
            samples: samples.len(),
        })
    }

    fn value_step(&mut self, batch: &[PolicySample]) {
        let mut grad = vec![0.0; self.value.n_params()];
        let scale = 1.0 / batch.len() as f64;
        for s in batch {
            let cache = self.value.forward_cached(&self.policy.scale_input(&s.observation));
            let err = cache.output()[0] - s.value_target;
            self.value.backward(&cache, &[scale * err], &mut grad);
        }
        clip_norm(&mut grad, self.cfg.max_grad_norm);
        let params = self.value.params_mut();
        self.value_opt.step(params, &grad);
    }
}

fn non_finite(what: impl Into<String>) -> Error {
    Error::NonFinite {
        agent: AgentId::LEADER,
        iteration: 0,
        what: what.into(),
    }
}

impl Actor for PpoLearner {
    fn obs_dim(&self) -> usize {
        self.policy.obs_dim()
    }

    fn act(&self, obs: &Observation, rng: &mut StreamRng, explore: bool) -> Decision {
        let dist = self.policy.forward(obs.as_slice());
        let (sample, log_prob) = self.policy.sample(&dist, rng, explore);
        let probs = match &dist {
            Dist::Categorical { probs } => Some(probs.clone()),
            Dist::Gaussian { .. } => None,
        };
        Decision {
            action: self.policy.to_action(&sample),
            sample,
            log_prob,
            value: self.value_of(obs.as_slice()),
            probs,
        }
    }
}

impl Learner for PpoLearner {
    fn update(&mut self, batch: &[&Trajectory]) -> Result<UpdateStats> {
        let samples = self.prepare(batch)?;
        self.update_on_samples(samples)
    }

    fn updates(&self) -> usize {
        self.updates
    }
}
