//! Parameterised stochastic policies: a tanh MLP trunk with a categorical or
//! diagonal-Gaussian head.
//!
//! Gaussian policies act in a normalised space: a sample `u` is clamped to
//! `[-1, 1]` and mapped affinely onto the action bounds. Log-probabilities are
//! always those of the unclamped `u`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::nn::Mlp;
use crate::error::{Error, Result};
use crate::game::{ActionSpace, ActionValue};
use crate::rng::StreamRng;

pub const LOG_STD_MIN: f64 = -9.210_340_371_976_182; // ln 1e-4
pub const LOG_STD_MAX: f64 = std::f64::consts::LN_10;
pub const INITIAL_LOG_STD: f64 = -std::f64::consts::LN_2; // ln 0.5

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Head {
    Categorical(usize),
    DiagonalGaussian { bounds: Vec<(f64, f64)> },
}

impl Head {
    pub fn for_space(space: &ActionSpace) -> Self {
        match space {
            ActionSpace::Discrete(k) => Head::Categorical(*k),
            ActionSpace::Continuous(bounds) => Head::DiagonalGaussian {
                bounds: bounds.clone(),
            },
        }
    }

    fn net_outputs(&self) -> usize {
        match self {
            Head::Categorical(k) => *k,
            Head::DiagonalGaussian { bounds } => bounds.len(),
        }
    }
}

/// Action distribution at one observation.
#[derive(Clone, Debug, PartialEq)]
pub enum Dist {
    Categorical { probs: Vec<f64> },
    Gaussian { mean: Vec<f64>, log_std: Vec<f64> },
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}

impl Dist {
    pub fn log_prob(&self, sample: &[f64]) -> f64 {
        match self {
            Dist::Categorical { probs } => probs[sample[0] as usize].max(f64::MIN_POSITIVE).ln(),
            Dist::Gaussian { mean, log_std } => mean
                .iter()
                .zip(log_std)
                .zip(sample)
                .map(|((m, s), u)| {
                    let z = (u - m) / s.exp();
                    -0.5 * z * z - s - 0.5 * (2.0 * PI).ln()
                })
                .sum(),
        }
    }

    pub fn entropy(&self) -> f64 {
        match self {
            Dist::Categorical { probs } => -probs
                .iter()
                .filter(|p| **p > 0.0)
                .map(|p| p * p.ln())
                .sum::<f64>(),
            Dist::Gaussian { log_std, .. } => log_std
                .iter()
                .map(|s| s + 0.5 * (2.0 * PI * std::f64::consts::E).ln())
                .sum(),
        }
    }

    /// `KL(self ‖ other)` in nats.
    pub fn kl(&self, other: &Dist) -> f64 {
        match (self, other) {
            (Dist::Categorical { probs: p }, Dist::Categorical { probs: q }) => p
                .iter()
                .zip(q)
                .filter(|(a, _)| **a > 0.0)
                .map(|(a, b)| a * (a.ln() - b.max(f64::MIN_POSITIVE).ln()))
                .sum(),
            (
                Dist::Gaussian {
                    mean: m0,
                    log_std: s0,
                },
                Dist::Gaussian {
                    mean: m1,
                    log_std: s1,
                },
            ) => (0..m0.len())
                .map(|i| {
                    let v0 = (2.0 * s0[i]).exp();
                    let v1 = (2.0 * s1[i]).exp();
                    s1[i] - s0[i] + (v0 + (m0[i] - m1[i]).powi(2)) / (2.0 * v1) - 0.5
                })
                .sum(),
            _ => f64::NAN,
        }
    }
}

/// A policy network plus its action head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub layer_sizes: Vec<usize>,
    pub head: Head,
    net: Mlp,
    log_std: Vec<f64>,
    input_scale: Vec<f64>,
}

impl PolicySpec {
    pub fn new(
        obs_dim: usize,
        layer_sizes: &[usize],
        head: Head,
        input_scale: Vec<f64>,
        rng: &mut StreamRng,
    ) -> Result<Self> {
        if layer_sizes.contains(&0) {
            return Err(Error::param("hidden layer sizes must be positive"));
        }
        if input_scale.len() != obs_dim {
            return Err(Error::param(format!(
                "input scale has {} entries for {obs_dim} inputs",
                input_scale.len()
            )));
        }
        match &head {
            Head::Categorical(0) => return Err(Error::param("categorical head needs k >= 1")),
            Head::DiagonalGaussian { bounds } if bounds.is_empty() => {
                return Err(Error::param("gaussian head needs at least one dimension"))
            }
            _ => {}
        }
        let net = Mlp::new(obs_dim, layer_sizes, head.net_outputs(), 0.01, rng);
        let log_std = match &head {
            Head::Categorical(_) => Vec::new(),
            Head::DiagonalGaussian { bounds } => vec![INITIAL_LOG_STD; bounds.len()],
        };
        Ok(PolicySpec {
            layer_sizes: layer_sizes.to_vec(),
            head,
            net,
            log_std,
            input_scale,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn log_std(&self) -> &[f64] {
        &self.log_std
    }

    pub fn n_params(&self) -> usize {
        self.net.n_params() + self.log_std.len()
    }

    /// Flat parameter vector: network weights followed by log-σ.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.net.params().to_vec();
        p.extend_from_slice(&self.log_std);
        p
    }

    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.n_params());
        let n = self.net.n_params();
        self.net.params_mut().copy_from_slice(&params[..n]);
        for (s, p) in self.log_std.iter_mut().zip(&params[n..]) {
            *s = p.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }

    pub fn scale_input(&self, obs: &[f64]) -> Vec<f64> {
        obs.iter().zip(&self.input_scale).map(|(o, s)| o * s).collect()
    }

    pub(crate) fn dist_from_output(&self, out: &[f64]) -> Dist {
        match &self.head {
            Head::Categorical(_) => Dist::Categorical {
                probs: softmax(out),
            },
            Head::DiagonalGaussian { .. } => Dist::Gaussian {
                mean: out.to_vec(),
                log_std: self.log_std.clone(),
            },
        }
    }

    pub fn forward(&self, obs: &[f64]) -> Dist {
        let out = self.net.forward(&self.scale_input(obs));
        self.dist_from_output(&out)
    }

    /// Draws (or, with `explore = false`, takes the mode of) an action.
    /// Returns the policy-space sample and its log-probability.
    pub fn sample(&self, dist: &Dist, rng: &mut StreamRng, explore: bool) -> (Vec<f64>, f64) {
        let sample = match dist {
            Dist::Categorical { probs } => {
                let idx = if explore {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut chosen = probs.len() - 1;
                    for (i, p) in probs.iter().enumerate() {
                        acc += p;
                        if u < acc {
                            chosen = i;
                            break;
                        }
                    }
                    chosen
                } else {
                    probs
                        .iter()
                        .enumerate()
                        .fold((0, f64::NEG_INFINITY), |best, (i, p)| if *p > best.1 { (i, *p) } else { best })
                        .0
                };
                vec![idx as f64]
            }
            Dist::Gaussian { mean, log_std } => mean
                .iter()
                .zip(log_std)
                .map(|(m, s)| {
                    if explore {
                        let z: f64 = rng.sample(StandardNormal);
                        m + s.exp() * z
                    } else {
                        *m
                    }
                })
                .collect(),
        };
        let lp = dist.log_prob(&sample);
        (sample, lp)
    }

    /// Maps a policy-space sample to an environment action inside the bounds.
    pub fn to_action(&self, sample: &[f64]) -> ActionValue {
        match &self.head {
            Head::Categorical(_) => ActionValue::Discrete(sample[0] as usize),
            Head::DiagonalGaussian { bounds } => ActionValue::Continuous(
                sample
                    .iter()
                    .zip(bounds)
                    .map(|(u, &(lo, hi))| lo + (hi - lo) * (u.clamp(-1.0, 1.0) + 1.0) / 2.0)
                    .collect(),
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    fn gaussian_policy() -> PolicySpec {
        let mut r = rng::stream(1);
        PolicySpec::new(
            2,
            &[8],
            Head::DiagonalGaussian {
                bounds: vec![(0.0, 10.0), (-1.0, 1.0)],
            },
            vec![1.0, 1.0],
            &mut r,
        )
        .unwrap()
    }

    #[test]
    fn gaussian_actions_stay_in_bounds() {
        let p = gaussian_policy();
        assert_eq!(p.to_action(&[-5.0, 5.0]), ActionValue::Continuous(vec![0.0, 1.0]));
        assert_eq!(p.to_action(&[0.0, 0.0]), ActionValue::Continuous(vec![5.0, 0.0]));
        assert!((p.log_std()[0] - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn log_std_is_clamped() {
        let mut p = gaussian_policy();
        let mut params = p.params();
        let n = params.len();
        params[n - 1] = 50.0;
        params[n - 2] = -50.0;
        p.set_params(&params);
        assert_eq!(p.log_std(), &[LOG_STD_MIN, LOG_STD_MAX]);
    }

    #[test]
    fn closed_form_kl_and_entropy() {
        let u = Dist::Categorical { probs: vec![0.2; 5] };
        assert!((u.entropy() - 5f64.ln()).abs() < 1e-12);
        assert!(u.kl(&u).abs() < 1e-15);
        let a = Dist::Gaussian { mean: vec![0.0], log_std: vec![0.0] };
        let b = Dist::Gaussian { mean: vec![1.0], log_std: vec![0.0] };
        assert!((a.kl(&b) - 0.5).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn categorical_forward_is_normalised(obs in prop::collection::vec(-50.0f64..50.0, 3), seed in 0u64..100) {
            let mut r = rng::stream(seed);
            let p = PolicySpec::new(3, &[4, 4], Head::Categorical(7), vec![1.0; 3], &mut r).unwrap();
            if let Dist::Categorical { probs } = p.forward(&obs) {
                prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                prop_assert!(probs.iter().all(|x| *x >= 0.0));
            } else {
                prop_assert!(false);
            }
        }
    }
}
