//! Analytic outer layer for preference conditioning: the uniform sampler over
//! a preference grid maximises the entropy of sampled preferences.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{ActionValue, Decision, Learner, Observation, Trajectory, UpdateStats};
use crate::game::Actor;
use crate::rng::{self, StreamRng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PreferenceGrid(Vec<f64>);

impl PreferenceGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::param("preference grid is empty"));
        }
        if values.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::param("preferences must lie in [0, 1]"));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::param("preference grid must be strictly ascending"));
        }
        Ok(PreferenceGrid(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<f64> {
        self.0.get(index).copied()
    }

    /// Index of the grid value closest to `omega`.
    pub fn nearest(&self, omega: f64) -> usize {
        self.0
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - omega).abs().total_cmp(&(b.1 - omega).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }
}

impl Default for PreferenceGrid {
    fn default() -> Self {
        PreferenceGrid(vec![0.0, 0.25, 0.5, 0.75, 1.0])
    }
}

impl TryFrom<Vec<f64>> for PreferenceGrid {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        PreferenceGrid::new(v)
    }
}

impl From<PreferenceGrid> for Vec<f64> {
    fn from(g: PreferenceGrid) -> Self {
        g.0
    }
}

fn sample_index(grid: &PreferenceGrid, rng: &mut StreamRng) -> usize {
    rng.random_range(0..grid.len())
}

pub fn max_entropy_sample(grid: &PreferenceGrid, seed: u64) -> f64 {
    let mut r = rng::stream(seed);
    grid.0[sample_index(grid, &mut r)]
}

/// Shannon entropy (nats) of empirical frequencies or counts; zero-count
/// cells contribute nothing.
pub fn preference_entropy(frequencies: &[f64]) -> Result<f64> {
    if frequencies.iter().any(|f| !f.is_finite() || *f < 0.0) {
        return Err(Error::param("frequencies must be finite and non-negative"));
    }
    let total: f64 = frequencies.iter().sum();
    if total <= 0.0 {
        return Err(Error::param("frequencies are all zero"));
    }
    Ok(-frequencies
        .iter()
        .filter(|f| **f > 0.0)
        .map(|f| {
            let p = f / total;
            p * p.ln()
        })
        .sum::<f64>())
}

/// Leader that draws a fresh grid index for each episode. It has nothing to
/// learn; `update` only counts calls.
#[derive(Clone, Debug)]
pub struct MaxEntropyLeader {
    grid: PreferenceGrid,
    obs_dim: usize,
    updates: usize,
}

impl MaxEntropyLeader {
    pub fn new(grid: PreferenceGrid, obs_dim: usize) -> Self {
        MaxEntropyLeader {
            grid,
            obs_dim,
            updates: 0,
        }
    }

    pub fn grid(&self) -> &PreferenceGrid {
        &self.grid
    }
}

impl Actor for MaxEntropyLeader {
    fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    fn act(&self, _obs: &Observation, rng: &mut StreamRng, _explore: bool) -> Decision {
        let k = sample_index(&self.grid, rng);
        let p = 1.0 / self.grid.len() as f64;
        Decision {
            action: ActionValue::Discrete(k),
            sample: vec![k as f64],
            log_prob: p.ln(),
            value: 0.0,
            probs: Some(vec![p; self.grid.len()]),
        }
    }
}

impl Learner for MaxEntropyLeader {
    fn update(&mut self, _batch: &[&Trajectory]) -> Result<UpdateStats> {
        self.updates += 1;
        Ok(UpdateStats::default())
    }

    fn updates(&self) -> usize {
        self.updates
    }
}
