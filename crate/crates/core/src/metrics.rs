//! Result statistics shared by every task, plus the CSV/JSON result formats.
//!
//! CSV rows are `experiment,metric,step,rollout,value`. The JSON summary holds
//! `{mean, min, max, final}` per metric and is a pure function of the rows.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::discounted_return;

/// A named, step-indexed scalar series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub name: String,
    pub points: Vec<(u64, f64)>,
}

impl MetricSeries {
    pub fn new(name: impl Into<String>) -> Self {
        MetricSeries {
            name: name.into(),
            points: Vec::new(),
        }
    }

    /// Appends a point; steps must strictly increase and values be finite.
    pub fn push(&mut self, step: u64, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::param(format!("{}: non-finite value at step {step}", self.name)));
        }
        if let Some(&(last, _)) = self.points.last() {
            if step <= last {
                return Err(Error::param(format!(
                    "{}: step {step} does not follow {last}",
                    self.name
                )));
            }
        }
        self.points.push((step, value));
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.1).collect()
    }

    pub fn last(&self) -> Option<f64> {
        self.points.last().map(|p| p.1)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Gini coefficient `Σ_i Σ_j |x_i − x_j| / (2 n² μ)`, computed in sorted order.
pub fn gini(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::param("gini of an empty list"));
    }
    if let Some(v) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::param(format!("gini needs finite non-negative values, got {v}")));
    }
    let n = values.len() as f64;
    let total: f64 = values.iter().sum();
    if total == 0.0 {
        return Ok(0.0);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    // Σ_{i<j} (x_j − x_i) = Σ_k (2k − n + 1) x_(k) for zero-based rank k.
    let weighted: f64 = sorted
        .iter()
        .enumerate()
        .map(|(k, x)| (2.0 * k as f64 - n + 1.0) * x)
        .sum();
    Ok(weighted / (n * total))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RolloutSummary {
    pub mean: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// Pointwise mean/min/max across rollouts, truncated to the shortest one.
pub fn summarize_rollouts(series: &[Vec<f64>]) -> Result<RolloutSummary> {
    if series.is_empty() {
        return Err(Error::param("no rollouts to summarize"));
    }
    let len = series.iter().map(Vec::len).min().unwrap_or(0);
    if series.iter().any(|s| s.len() != len) {
        log::warn!("rollouts differ in length; truncating to {len} steps");
    }
    let mut out = RolloutSummary {
        mean: Vec::with_capacity(len),
        min: Vec::with_capacity(len),
        max: Vec::with_capacity(len),
    };
    for t in 0..len {
        let column = series.iter().map(|s| s[t]);
        let (sum, lo, hi) = column.fold((0.0, f64::INFINITY, f64::NEG_INFINITY), |(s, lo, hi), v| {
            (s + v, lo.min(v), hi.max(v))
        });
        // Clamp guards against the mean drifting a ulp outside [min, max].
        out.mean.push((sum / series.len() as f64).clamp(lo, hi));
        out.min.push(lo);
        out.max.push(hi);
    }
    Ok(out)
}

/// Leader return per training iteration, averaged over that iteration's
/// evaluation rollouts. `iterations[i][r]` holds the per-step leader rewards
/// of rollout `r` at iteration `i`.
pub fn welfare_curve(iterations: &[Vec<Vec<f64>>], gamma: f64) -> Result<MetricSeries> {
    let mut series = MetricSeries::new("welfare");
    for (i, rollouts) in iterations.iter().enumerate() {
        if rollouts.is_empty() {
            return Err(Error::param(format!("iteration {i} has no rollouts")));
        }
        let mut total = 0.0;
        for r in rollouts {
            total += if r.is_empty() { 0.0 } else { discounted_return(r, gamma)? };
        }
        series.push(i as u64, total / rollouts.len() as f64)?;
    }
    Ok(series)
}

/// One CSV row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub experiment: String,
    pub metric: String,
    pub step: u64,
    pub rollout: u64,
    pub value: f64,
}

pub fn write_csv(path: &Path, records: &[MetricRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<MetricRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Mean over rollouts of the value at the metric's last step.
    #[serde(rename = "final")]
    pub final_value: f64,
}

/// JSON summary contents, recomputable from the CSV rows alone.
pub fn summarize_records(records: &[MetricRecord]) -> BTreeMap<String, MetricSummary> {
    let mut grouped: BTreeMap<&str, Vec<&MetricRecord>> = BTreeMap::new();
    for r in records {
        grouped.entry(&r.metric).or_default().push(r);
    }
    grouped
        .into_iter()
        .map(|(name, rows)| {
            let n = rows.len() as f64;
            let mean = rows.iter().map(|r| r.value).sum::<f64>() / n;
            let min = rows.iter().map(|r| r.value).fold(f64::INFINITY, f64::min);
            let max = rows.iter().map(|r| r.value).fold(f64::NEG_INFINITY, f64::max);
            let last = rows.iter().map(|r| r.step).max().unwrap_or(0);
            let finals: Vec<f64> = rows.iter().filter(|r| r.step == last).map(|r| r.value).collect();
            let final_value = finals.iter().sum::<f64>() / finals.len() as f64;
            (
                name.to_string(),
                MetricSummary {
                    mean,
                    min,
                    max,
                    final_value,
                },
            )
        })
        .collect()
}
