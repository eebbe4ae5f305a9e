//! Gaussian-process Bayesian optimisation for low-dimensional outer problems.
//!
//! Inputs are rescaled to the unit cube and outputs standardised before the
//! fit. The squared-exponential lengthscale and the noise level are chosen by
//! marginal likelihood over a small grid; the next candidate maximises
//! expected improvement via multi-start pattern search.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::game::{ActionValue, Actor, Decision, Learner, Observation, Trajectory, UpdateStats};
use crate::rng::{self, tag, StreamRng};

const JITTER: f64 = 1e-8;
const LENGTHSCALES: [f64; 8] = [0.05, 0.1, 0.2, 0.3, 0.5, 0.8, 1.5, 3.0];
const NOISES: [f64; 4] = [1e-6, 1e-4, 1e-2, 1e-1];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    /// Lengthscale in unit-cube coordinates.
    pub lengthscale: f64,
    /// Observation noise variance relative to the standardised outputs.
    pub noise: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcquisitionConfig {
    pub n_init: usize,
    pub restarts: usize,
    /// Exploration margin in standardised units.
    pub xi: f64,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        AcquisitionConfig {
            n_init: 5,
            restarts: 16,
            xi: 0.01,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SurrogateState {
    observations: Vec<(Vec<f64>, f64)>,
    pub kernel: Option<KernelParams>,
    pub acquisition: AcquisitionConfig,
}

impl SurrogateState {
    pub fn new(acquisition: AcquisitionConfig) -> Self {
        SurrogateState {
            observations: Vec::new(),
            kernel: None,
            acquisition,
        }
    }

    pub fn observe(&mut self, theta: Vec<f64>, value: f64) -> Result<()> {
        if !value.is_finite() || theta.iter().any(|x| !x.is_finite()) {
            return Err(Error::param("observations must be finite"));
        }
        if let Some((first, _)) = self.observations.first() {
            if first.len() != theta.len() {
                return Err(Error::param(format!(
                    "candidate has {} dims, earlier ones have {}",
                    theta.len(),
                    first.len()
                )));
            }
        }
        self.observations.push((theta, value));
        Ok(())
    }

    pub fn observations(&self) -> &[(Vec<f64>, f64)] {
        &self.observations
    }

    pub fn best(&self) -> Option<&(Vec<f64>, f64)> {
        self.observations.iter().max_by(|a, b| a.1.total_cmp(&b.1))
    }
}

fn check_bounds(bounds: &[(f64, f64)]) -> Result<()> {
    if bounds.is_empty() {
        return Err(Error::param("no dimensions to optimise"));
    }
    for &(lo, hi) in bounds {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::param(format!("invalid bound ({lo}, {hi})")));
        }
    }
    Ok(())
}

fn to_unit(x: &[f64], bounds: &[(f64, f64)]) -> Vec<f64> {
    x.iter()
        .zip(bounds)
        .map(|(v, &(lo, hi))| if hi > lo { ((v - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 })
        .collect()
}

fn from_unit(u: &[f64], bounds: &[(f64, f64)]) -> Vec<f64> {
    u.iter()
        .zip(bounds)
        .map(|(v, &(lo, hi))| (lo + v * (hi - lo)).clamp(lo, hi))
        .collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

struct Gp {
    xs: Vec<Vec<f64>>,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    lengthscale: f64,
}

impl Gp {
    fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        (-0.5 * sq_dist(a, b) / (self.lengthscale * self.lengthscale)).exp()
    }

    /// Posterior mean and standard deviation (standardised units).
    fn predict(&self, x: &[f64]) -> (f64, f64) {
        let k = DVector::from_iterator(self.xs.len(), self.xs.iter().map(|xi| self.kernel(x, xi)));
        let mean = k.dot(&self.alpha);
        let v = self.chol.l().solve_lower_triangular(&k).expect("triangular factor is invertible");
        let var = (1.0 - v.dot(&v)).max(1e-12);
        (mean, var.sqrt())
    }
}

/// Fits the GP for one hyperparameter pair, returning it with its log marginal
/// likelihood.
fn fit(xs: &[Vec<f64>], ys: &DVector<f64>, params: KernelParams) -> Option<(Gp, f64)> {
    let n = xs.len();
    let l2 = params.lengthscale * params.lengthscale;
    let k = DMatrix::from_fn(n, n, |i, j| {
        let base = (-0.5 * sq_dist(&xs[i], &xs[j]) / l2).exp();
        if i == j {
            base + params.noise + JITTER
        } else {
            base
        }
    });
    let chol = k.cholesky()?;
    let alpha = chol.solve(ys);
    let log_det: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
    let lml = -0.5 * ys.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    Some((
        Gp {
            xs: xs.to_vec(),
            chol,
            alpha,
            lengthscale: params.lengthscale,
        },
        lml,
    ))
}

fn expected_improvement(gp: &Gp, x: &[f64], best: f64, xi: f64, normal: &Normal) -> f64 {
    let (mu, sd) = gp.predict(x);
    let imp = mu - best - xi;
    let z = imp / sd;
    imp * normal.cdf(z) + sd * normal.pdf(z)
}

/// Coordinate pattern search in the unit cube, restricted to free dims.
fn pattern_search(start: Vec<f64>, free: &[usize], f: &dyn Fn(&[f64]) -> f64) -> (Vec<f64>, f64) {
    let mut x = start;
    let mut fx = f(&x);
    let mut step = 0.1;
    while step > 1e-4 {
        let mut improved = false;
        for &d in free {
            for dir in [1.0, -1.0] {
                let mut y = x.clone();
                y[d] = (y[d] + dir * step).clamp(0.0, 1.0);
                let fy = f(&y);
                if fy > fx {
                    x = y;
                    fx = fy;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (x, fx)
}

fn random_unit(dims: usize, free: &[usize], rng: &mut StreamRng) -> Vec<f64> {
    let mut u = vec![0.0; dims];
    for &d in free {
        u[d] = rng.random::<f64>();
    }
    u
}

/// Next candidate to evaluate, always within `bounds`.
pub fn bayes_suggest(state: &mut SurrogateState, bounds: &[(f64, f64)], rng: &mut StreamRng) -> Result<Vec<f64>> {
    check_bounds(bounds)?;
    let dims = bounds.len();
    if let Some((x, _)) = state.observations.first() {
        if x.len() != dims {
            return Err(Error::param(format!("observations have {} dims, bounds {dims}", x.len())));
        }
    }
    let free: Vec<usize> = (0..dims).filter(|&d| bounds[d].1 > bounds[d].0).collect();
    if free.is_empty() {
        log::warn!("all bounds are degenerate; returning the single feasible point");
        return Ok(bounds.iter().map(|b| b.0).collect());
    }
    let xs: Vec<Vec<f64>> = state.observations.iter().map(|(x, _)| to_unit(x, bounds)).collect();

    if state.observations.len() < state.acquisition.n_init {
        // maximin over a few random candidates
        let best = (0..32)
            .map(|_| random_unit(dims, &free, rng))
            .map(|c| {
                let d = xs.iter().map(|x| sq_dist(&c, x)).fold(f64::INFINITY, f64::min);
                (c, d)
            })
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(c, _)| c)
            .expect("non-empty candidate set");
        return Ok(from_unit(&best, bounds));
    }

    let raw: Vec<f64> = state.observations.iter().map(|o| o.1).collect();
    let n = raw.len() as f64;
    let mean = raw.iter().sum::<f64>() / n;
    let sd = (raw.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n).sqrt();
    let sd = if sd > 1e-12 { sd } else { 1.0 };
    let ys = DVector::from_iterator(raw.len(), raw.iter().map(|y| (y - mean) / sd));

    let mut fitted: Option<(Gp, f64, KernelParams)> = None;
    for &lengthscale in &LENGTHSCALES {
        for &noise in &NOISES {
            let params = KernelParams { lengthscale, noise };
            if let Some((gp, lml)) = fit(&xs, &ys, params) {
                if fitted.as_ref().is_none_or(|f| lml > f.1) {
                    fitted = Some((gp, lml, params));
                }
            }
        }
    }
    let (gp, _, params) = fitted.ok_or_else(|| Error::param("surrogate fit failed for every hyperparameter"))?;
    state.kernel = Some(params);

    let best_y = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let best_idx = ys.iter().position(|y| *y == best_y).unwrap_or(0);
    let normal = Normal::standard();
    let xi = state.acquisition.xi;
    let ei = |x: &[f64]| expected_improvement(&gp, x, best_y, xi, &normal);

    let mut starts = vec![xs[best_idx].clone()];
    for _ in 1..state.acquisition.restarts.max(1) {
        starts.push(random_unit(dims, &free, rng));
    }
    let (best_u, _) = starts
        .into_iter()
        .map(|s| pattern_search(s, &free, &ei))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least one start");
    Ok(from_unit(&best_u, bounds))
}

/// Outer-layer learner that proposes characteristics, observes the mean
/// episode return they earn, and proposes again.
#[derive(Clone, Debug)]
pub struct BayesLeader {
    state: SurrogateState,
    bounds: Vec<(f64, f64)>,
    current: Vec<f64>,
    obs_dim: usize,
    rng: StreamRng,
    updates: usize,
}

impl BayesLeader {
    pub fn new(bounds: Vec<(f64, f64)>, obs_dim: usize, acquisition: AcquisitionConfig, seed: u64) -> Result<Self> {
        let mut rng = rng::stream(rng::derive(seed, &[tag::LEARNER]));
        let mut state = SurrogateState::new(acquisition);
        let current = bayes_suggest(&mut state, &bounds, &mut rng)?;
        Ok(BayesLeader {
            state,
            bounds,
            current,
            obs_dim,
            rng,
            updates: 0,
        })
    }

    pub fn current(&self) -> &[f64] {
        &self.current
    }

    pub fn state(&self) -> &SurrogateState {
        &self.state
    }

    /// Best candidate seen so far.
    pub fn best(&self) -> Option<&[f64]> {
        self.state.best().map(|(x, _)| x.as_slice())
    }

    /// Records the outcome of the current candidate and moves to the next.
    pub fn observe(&mut self, value: f64) -> Result<()> {
        self.state.observe(self.current.clone(), value)?;
        self.current = bayes_suggest(&mut self.state, &self.bounds, &mut self.rng)?;
        Ok(())
    }
}

impl Actor for BayesLeader {
    fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    /// Exploring rollouts use the candidate under evaluation; greedy ones
    /// use the best candidate observed so far.
    fn act(&self, _obs: &Observation, _rng: &mut StreamRng, explore: bool) -> Decision {
        let theta = if explore {
            self.current.clone()
        } else {
            self.best().map(<[f64]>::to_vec).unwrap_or_else(|| self.current.clone())
        };
        Decision::fixed(ActionValue::Continuous(theta))
    }
}

impl Learner for BayesLeader {
    fn update(&mut self, batch: &[&Trajectory]) -> Result<UpdateStats> {
        self.updates += 1;
        if batch.is_empty() {
            return Ok(UpdateStats::default());
        }
        let total: f64 = batch.iter().map(|t| t.rewards().iter().sum::<f64>()).sum();
        self.observe(total / batch.len() as f64)?;
        Ok(UpdateStats {
            samples: batch.len(),
            ..UpdateStats::default()
        })
    }

    fn updates(&self) -> usize {
        self.updates
    }
}
