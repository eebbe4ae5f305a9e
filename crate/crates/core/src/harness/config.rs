//! Experiment configuration files.
//!
//! One TOML file describes one experiment. Every section is parsed strictly:
//! an unknown key is an error, never a silent default.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::envs::{CobwebConfig, EntryConfig, MmConfig, TaxAiConfig};
use crate::error::{Error, Result};
use crate::learners::{AcquisitionConfig, PpoConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    PolicyDesign,
    Calibrate,
    Scenario,
    MetaMm,
}

impl Task {
    pub const ALL: [Task; 4] = [Task::PolicyDesign, Task::Calibrate, Task::Scenario, Task::MetaMm];

    pub fn name(self) -> &'static str {
        match self {
            Task::PolicyDesign => "policy-design",
            Task::Calibrate => "calibrate",
            Task::Scenario => "scenario",
            Task::MetaMm => "meta-mm",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Task::PolicyDesign => "government sets income and wealth taxes for learning households",
            Task::Calibrate => "fit information-processing penalties of cobweb producers to a price series",
            Task::Scenario => "duty on position changes to steady demand in a market entrance game",
            Task::MetaMm => "one market-making policy conditioned on a sampled profit/share preference",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    /// Follower updates per leader update.
    pub inner_updates_per_outer: usize,
    /// Overrides the environment's own leader period.
    pub leader_action_period: Option<usize>,
    pub episodes_per_update: usize,
    pub leader_episodes_per_update: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            inner_updates_per_outer: 10,
            leader_action_period: None,
            episodes_per_update: 4,
            leader_episodes_per_update: 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outer {
    /// PPO leader.
    Rl,
    /// Gaussian-process Bayesian optimisation.
    Bayes,
    /// Penalties held at `fixed_theta` (zeros: rational producers).
    Fixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub outer: Outer,
    pub fixed_theta: Option<Vec<f64>>,
    /// Newline-separated prices to calibrate against. When absent a
    /// synthetic target is simulated from `target_theta`.
    pub target_file: Option<PathBuf>,
    pub target_theta: Vec<f64>,
    /// Producer training budget for the synthetic target; defaults to
    /// `training_iterations`.
    pub target_training_iterations: Option<usize>,
    pub target_rollouts: usize,
    pub bootstrap_resamples: usize,
    pub bayes: AcquisitionConfig,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            outer: Outer::Rl,
            fixed_theta: None,
            target_file: None,
            target_theta: vec![10.0, 3.0],
            target_training_iterations: None,
            target_rollouts: 10,
            bootstrap_resamples: 100,
            bayes: AcquisitionConfig::default(),
        }
    }
}

fn default_rollouts() -> usize {
    10
}

fn default_training_iterations() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    /// Experiment label written to every CSV row; the task name when unset.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_rollouts")]
    pub rollouts: usize,
    #[serde(default = "default_training_iterations")]
    pub training_iterations: usize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    /// Follower learner.
    #[serde(default)]
    pub learner: PpoConfig,
    /// Leader learner, when the outer layer is PPO.
    #[serde(default)]
    pub leader: PpoConfig,
    /// Task-specific environment keys.
    #[serde(default)]
    pub env: toml::Table,
    /// Calibration task only.
    #[serde(default)]
    pub calibration: Option<CalibrationConfig>,
}

/// The environment section parsed for the configured task.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum EnvConfig {
    TaxAi(TaxAiConfig),
    Cobweb(CobwebConfig),
    Entry(EntryConfig),
    Mm(MmConfig),
}

fn parse_section<T: DeserializeOwned>(table: &toml::Table, section: &str) -> Result<T> {
    toml::Value::Table(table.clone())
        .try_into()
        .map_err(|e: toml::de::Error| Error::config(format!("[{section}] {}", e.message())))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn experiment_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.task.name().to_string())
    }

    pub fn env_config(&self) -> Result<EnvConfig> {
        let env = match self.task {
            Task::PolicyDesign => {
                let c: TaxAiConfig = parse_section(&self.env, "env")?;
                c.validate()?;
                EnvConfig::TaxAi(c)
            }
            Task::Calibrate => {
                let c: CobwebConfig = parse_section(&self.env, "env")?;
                c.validate()?;
                EnvConfig::Cobweb(c)
            }
            Task::Scenario => {
                let c: EntryConfig = parse_section(&self.env, "env")?;
                c.validate()?;
                EnvConfig::Entry(c)
            }
            Task::MetaMm => {
                let c: MmConfig = parse_section(&self.env, "env")?;
                c.validate()?;
                EnvConfig::Mm(c)
            }
        };
        Ok(env)
    }

    pub fn calibration_config(&self) -> CalibrationConfig {
        self.calibration.clone().unwrap_or_default()
    }

    pub fn validate(&self) -> Result<()> {
        if self.rollouts == 0 {
            return Err(Error::config("rollouts must be at least 1"));
        }
        let s = &self.schedule;
        if s.inner_updates_per_outer == 0 {
            return Err(Error::config("schedule.inner_updates_per_outer must be at least 1"));
        }
        if s.leader_action_period == Some(0) {
            return Err(Error::config("schedule.leader_action_period must be at least 1"));
        }
        if s.episodes_per_update == 0 || s.leader_episodes_per_update == 0 {
            return Err(Error::config("schedule episode counts must be at least 1"));
        }
        self.learner
            .validate()
            .map_err(|e| Error::config(format!("[learner] {}", strip(e))))?;
        self.leader
            .validate()
            .map_err(|e| Error::config(format!("[leader] {}", strip(e))))?;
        let env = self.env_config()?;
        if self.calibration.is_some() && self.task != Task::Calibrate {
            return Err(Error::config("[calibration] only applies to the calibrate task"));
        }
        if let EnvConfig::Cobweb(c) = &env {
            let cal = self.calibration_config();
            let dims = c.theta_bounds().len();
            if cal.target_file.is_none() && cal.target_theta.len() != dims {
                return Err(Error::config(format!(
                    "calibration.target_theta needs {dims} values for mode {:?}",
                    c.mode
                )));
            }
            if let Some(t) = &cal.fixed_theta {
                if t.len() != dims {
                    return Err(Error::config(format!("calibration.fixed_theta needs {dims} values")));
                }
            }
            if cal.target_rollouts == 0 {
                return Err(Error::config("calibration.target_rollouts must be at least 1"));
            }
        }
        Ok(())
    }

    /// Config with every default filled in, for the run manifest.
    pub fn resolved(&self) -> Result<serde_json::Value> {
        let mut v = serde_json::to_value(self)?;
        v["env"] = serde_json::to_value(self.env_config()?)?;
        v["name"] = serde_json::Value::String(self.experiment_name());
        if self.task == Task::Calibrate {
            v["calibration"] = serde_json::to_value(self.calibration_config())?;
        }
        Ok(v)
    }
}

fn strip(e: Error) -> String {
    match e {
        Error::Config(m) | Error::Parameter(m) => m,
        other => other.to_string(),
    }
}
