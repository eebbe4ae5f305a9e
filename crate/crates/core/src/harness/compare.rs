//! Side-by-side summaries of one metric from two run directories.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::{read_csv, summarize_records, MetricRecord, MetricSummary};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub statistic: &'static str,
    pub a: f64,
    pub b: f64,
    /// `b − a`.
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub metric: String,
    pub rows: Vec<ComparisonRow>,
}

/// Metric named in neither or only one run.
#[derive(Clone, Debug, PartialEq)]
pub struct MissingMetric {
    pub metric: String,
    pub available: Vec<String>,
}

fn load(dir: &Path) -> Result<Vec<MetricRecord>> {
    read_csv(&dir.join("metrics.csv"))
}

fn summary_of(records: &[MetricRecord], metric: &str) -> Option<MetricSummary> {
    let rows: Vec<MetricRecord> = records.iter().filter(|r| r.metric == metric).cloned().collect();
    summarize_records(&rows).remove(metric)
}

/// Compares `metric` between runs `a` and `b`. The inner `Err` lists the
/// metrics present in both runs when `metric` is missing from either.
pub fn compare_runs(a: &Path, b: &Path, metric: &str) -> Result<std::result::Result<Comparison, MissingMetric>> {
    let ra = load(a)?;
    let rb = load(b)?;
    let (sa, sb) = match (summary_of(&ra, metric), summary_of(&rb, metric)) {
        (Some(x), Some(y)) => (x, y),
        _ => {
            let na: BTreeSet<&str> = ra.iter().map(|r| r.metric.as_str()).collect();
            let nb: BTreeSet<&str> = rb.iter().map(|r| r.metric.as_str()).collect();
            return Ok(Err(MissingMetric {
                metric: metric.to_string(),
                available: na.intersection(&nb).map(|s| s.to_string()).collect(),
            }));
        }
    };
    let row = |statistic, a: f64, b: f64| ComparisonRow {
        statistic,
        a,
        b,
        delta: b - a,
    };
    Ok(Ok(Comparison {
        metric: metric.to_string(),
        rows: vec![
            row("mean", sa.mean, sb.mean),
            row("min", sa.min, sb.min),
            row("max", sa.max, sb.max),
            row("final", sa.final_value, sb.final_value),
        ],
    }))
}

fn sign(delta: f64) -> &'static str {
    if delta > 0.0 {
        "+"
    } else if delta < 0.0 {
        "-"
    } else {
        "0"
    }
}

impl Comparison {
    pub fn to_text(&self) -> String {
        let mut s = format!("metric: {}\n", self.metric);
        let _ = writeln!(s, "{:<8} {:>16} {:>16} {:>16} {:>4}", "stat", "a", "b", "b - a", "sign");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<8} {:>16.6} {:>16.6} {:>16.6} {:>4}",
                r.statistic,
                r.a,
                r.b,
                r.delta,
                sign(r.delta)
            );
        }
        s
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["metric", "statistic", "a", "b", "delta"])?;
        for r in &self.rows {
            w.write_record([
                self.metric.clone(),
                r.statistic.to_string(),
                r.a.to_string(),
                r.b.to_string(),
                r.delta.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::config(format!("csv buffer: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::write_csv;

    fn rec(metric: &str, step: u64, rollout: u64, value: f64) -> MetricRecord {
        MetricRecord {
            experiment: "x".into(),
            metric: metric.into(),
            step,
            rollout,
            value,
        }
    }

    #[test]
    fn deltas_and_missing_metrics() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        write_csv(&a.path().join("metrics.csv"), &[rec("m", 0, 0, 1.0), rec("m", 1, 0, 3.0), rec("only_a", 0, 0, 1.0)]).unwrap();
        write_csv(&b.path().join("metrics.csv"), &[rec("m", 0, 0, 2.0), rec("m", 1, 0, 2.0)]).unwrap();
        let c = compare_runs(a.path(), b.path(), "m").unwrap().unwrap();
        assert_eq!(c.rows[0].delta, 0.0);
        assert_eq!(c.rows[1].delta, 1.0);
        assert_eq!(c.rows[2].delta, -1.0);
        assert_eq!(c.rows[3].delta, -1.0);
        assert!(c.to_csv().unwrap().starts_with("metric,statistic,a,b,delta\n"));
        let missing = compare_runs(a.path(), b.path(), "only_a").unwrap().unwrap_err();
        assert_eq!(missing.available, vec!["m".to_string()]);
    }
}
