//! KL information cost of a categorical policy relative to a prior.

use crate::error::{Error, Result};

const TOL: f64 = 1e-9;

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::param(format!("{what} has a negative or non-finite entry")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > TOL * p.len().max(1) as f64 {
        return Err(Error::param(format!("{what} sums to {total}, not 1")));
    }
    Ok(())
}

/// `Σ_a π(a) ln(π(a)/π₀(a))` in nats.
pub fn kl_information_cost(dist: &[f64], prior: &[f64]) -> Result<f64> {
    if dist.is_empty() || dist.len() != prior.len() {
        return Err(Error::param(format!(
            "distribution over {} actions vs prior over {}",
            dist.len(),
            prior.len()
        )));
    }
    check_distribution(dist, "distribution")?;
    check_distribution(prior, "prior")?;
    let mut cost = 0.0;
    for (p, q) in dist.iter().zip(prior) {
        if *p == 0.0 {
            continue;
        }
        if *q <= 0.0 {
            return Err(Error::param("distribution puts mass outside the prior support"));
        }
        cost += p * (p / q).ln();
    }
    Ok(cost.max(0.0))
}

/// Cost against the uniform prior over `dist.len()` actions.
pub fn uniform_information_cost(dist: &[f64]) -> Result<f64> {
    let k = dist.len();
    kl_information_cost(dist, &vec![1.0 / k as f64; k])
}
