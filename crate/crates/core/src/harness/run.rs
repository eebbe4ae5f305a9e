//! Running one experiment: train, evaluate, and write the run directory.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use super::config::{EnvConfig, ExperimentConfig, Outer, Task};
use crate::envs::cobweb::{bootstrap_calibration, RationalProducer};
use crate::envs::{Cobweb, CobwebConfig, EntryGame, MarketMaking, TaxAi};
use crate::error::{Error, Result};
use crate::game::{
    alternating_train, collect_episodes, Actor, ActionValue, AgentId, Environment, Episode, Learner,
    PolicyBinding, RolloutOptions, TimescaleSchedule, TrainingOptions, TrainingReport,
};
use crate::learners::{preference_entropy, BayesLeader, FixedPolicy, MaxEntropyLeader, PpoLearner};
use crate::metrics::{self, MetricRecord};
use crate::rng::{self, tag};

/// Environment variable naming the default parent of run directories.
pub const OUTPUT_ROOT_ENV: &str = "BILEVEL_OUTPUT_ROOT";

/// A game after alternating training.
pub struct TrainedGame<E> {
    pub env: E,
    pub leader: Box<dyn Learner>,
    pub followers: Vec<Box<dyn Learner>>,
    pub binding: PolicyBinding,
    pub report: TrainingReport,
    pub leader_action_period: usize,
}

impl<E: Environment> TrainedGame<E> {
    /// Plays `seeds.len()` evaluation episodes. The leader acts greedily;
    /// `leader` replaces the trained leader when given.
    pub fn evaluate(
        &self,
        leader: Option<&dyn Actor>,
        explore_followers: bool,
        seeds: &[u64],
        pool: Option<&rayon::ThreadPool>,
    ) -> Result<Vec<Episode>> {
        let spec = self.env.spec();
        let opts = RolloutOptions {
            horizon: spec.horizon,
            leader_action_period: self.leader_action_period,
            explore_leader: false,
            explore_followers,
        };
        let actors = self.binding.actors(&self.followers);
        let leader = leader.unwrap_or(&*self.leader);
        collect_episodes(&self.env, leader, &actors, &self.env.default_characteristics(), &opts, seeds, pool)
    }
}

/// PPO followers sharing one policy.
pub fn ppo_followers<E: Environment>(env: &E, cfg: &ExperimentConfig, seed: u64) -> Result<Vec<Box<dyn Learner>>> {
    let spec = env.spec();
    let learner = PpoLearner::new(
        &spec.follower_action,
        spec.follower_obs.scale.clone(),
        cfg.learner.clone(),
        rng::derive(seed, &[tag::INIT, 1]),
    )?;
    Ok(vec![Box::new(learner)])
}

pub fn ppo_leader<E: Environment>(env: &E, cfg: &ExperimentConfig, seed: u64) -> Result<Box<dyn Learner>> {
    let spec = env.spec();
    Ok(Box::new(PpoLearner::new(
        &spec.leader_action,
        spec.leader_obs.scale.clone(),
        cfg.leader.clone(),
        rng::derive(seed, &[tag::INIT, 0]),
    )?))
}

/// Trains `leader` against shared PPO followers for `iterations` outer
/// iterations under the schedule in `cfg`.
pub fn train_game<E: Environment>(
    env: E,
    leader: Box<dyn Learner>,
    cfg: &ExperimentConfig,
    iterations: usize,
    seed: u64,
    pool: Option<&rayon::ThreadPool>,
) -> Result<TrainedGame<E>> {
    let spec = env.spec();
    let mut leader = leader;
    let mut followers = ppo_followers(&env, cfg, seed)?;
    let binding = PolicyBinding::shared(spec.n_followers);
    let schedule = TimescaleSchedule {
        inner_updates_per_outer: cfg.schedule.inner_updates_per_outer,
        leader_action_period: cfg.schedule.leader_action_period.unwrap_or(spec.leader_action_period),
        total_outer_iterations: iterations,
    };
    let options = TrainingOptions {
        horizon: spec.horizon,
        gamma: cfg.learner.gamma,
        episodes_per_update: cfg.schedule.episodes_per_update,
        leader_episodes_per_update: cfg.schedule.leader_episodes_per_update,
    };
    let report = alternating_train(
        &env,
        leader.as_mut(),
        &mut followers,
        &binding,
        &schedule,
        &options,
        rng::derive(seed, &[tag::AGENT]),
        pool,
    )?;
    Ok(TrainedGame {
        env,
        leader,
        followers,
        binding,
        report,
        leader_action_period: schedule.leader_action_period,
    })
}

/// Evaluation seeds `0..count` under `path`.
pub fn eval_seeds(seed: u64, path: &[u64], count: usize) -> Vec<u64> {
    (0..count as u64)
        .map(|r| {
            let mut p = vec![tag::EVAL];
            p.extend_from_slice(path);
            p.push(r);
            rng::derive(seed, &p)
        })
        .collect()
}

/// Collects CSV rows for one experiment.
pub struct RecordSink {
    experiment: String,
    pub records: Vec<MetricRecord>,
}

impl RecordSink {
    pub fn new(experiment: impl Into<String>) -> Self {
        RecordSink {
            experiment: experiment.into(),
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, metric: impl Into<String>, step: u64, rollout: u64, value: f64) -> Result<()> {
        let metric = metric.into();
        if !value.is_finite() {
            return Err(Error::NonFinite {
                agent: AgentId::LEADER,
                iteration: step as usize,
                what: format!("{metric} = {value} (rollout {rollout})"),
            });
        }
        self.records.push(MetricRecord {
            experiment: self.experiment.clone(),
            metric,
            step,
            rollout,
            value,
        });
        Ok(())
    }

    pub fn training(&mut self, report: &TrainingReport) -> Result<()> {
        for s in &report.series {
            for &(step, v) in &s.points {
                self.push(format!("train.{}", s.name), step, 0, v)?;
            }
        }
        Ok(())
    }

    /// Per-rollout returns, episode metrics, characteristics and per-step
    /// series, with metric names under `prefix`.
    pub fn episodes(&mut self, prefix: &str, episodes: &[Episode]) -> Result<()> {
        for (r, ep) in episodes.iter().enumerate() {
            let r = r as u64;
            self.push(format!("{prefix}.leader_return"), 0, r, ep.leader().discounted_return(1.0)?)?;
            let followers = ep.followers();
            let mut total = 0.0;
            for f in followers {
                total += f.discounted_return(1.0)?;
            }
            self.push(format!("{prefix}.follower_return"), 0, r, total / followers.len().max(1) as f64)?;
            for (k, v) in &ep.episode_metrics {
                self.push(format!("{prefix}.{k}"), 0, r, *v)?;
            }
            if let Some(theta) = ep.thetas.first() {
                for (i, v) in theta.iter().enumerate() {
                    self.push(format!("{prefix}.theta_{i}"), 0, r, *v)?;
                }
            }
            for (k, values) in &ep.step_metrics {
                for (t, v) in values.iter().enumerate() {
                    self.push(format!("step.{prefix}.{k}"), t as u64, r, *v)?;
                }
            }
        }
        Ok(())
    }
}

/// Outcome of [`execute`]: CSV rows plus the trained leader's greedy
/// characteristics, when the task has a single one.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub records: Vec<MetricRecord>,
    pub leader_updates: usize,
    pub follower_updates: Vec<usize>,
}

impl RunResult {
    /// Values of `metric` in row order.
    pub fn values(&self, metric: &str) -> Vec<f64> {
        self.records.iter().filter(|r| r.metric == metric).map(|r| r.value).collect()
    }

    pub fn mean(&self, metric: &str) -> Option<f64> {
        let v = self.values(metric);
        if v.is_empty() {
            None
        } else {
            Some(v.iter().sum::<f64>() / v.len() as f64)
        }
    }
}

/// Trains and evaluates the experiment in memory.
pub fn execute(cfg: &ExperimentConfig, pool: Option<&rayon::ThreadPool>) -> Result<RunResult> {
    cfg.validate()?;
    let mut sink = RecordSink::new(cfg.experiment_name());
    let (leader_updates, follower_updates) = match cfg.env_config()? {
        EnvConfig::TaxAi(c) => policy_design(cfg, TaxAi::new(c)?, &mut sink, pool)?,
        EnvConfig::Cobweb(c) => calibrate(cfg, c, &mut sink, pool)?,
        EnvConfig::Entry(c) => scenario(cfg, EntryGame::new(c)?, &mut sink, pool)?,
        EnvConfig::Mm(c) => meta_mm(cfg, MarketMaking::new(c)?, &mut sink, pool)?,
    };
    Ok(RunResult {
        records: sink.records,
        leader_updates,
        follower_updates,
    })
}

type Counts = (usize, Vec<usize>);

fn counts<E>(game: &TrainedGame<E>) -> Counts {
    (game.report.leader_updates, game.report.follower_updates.clone())
}

fn policy_design(
    cfg: &ExperimentConfig,
    env: TaxAi,
    sink: &mut RecordSink,
    pool: Option<&rayon::ThreadPool>,
) -> Result<Counts> {
    let leader: Box<dyn Learner> = if env.config().free_market {
        let spec = env.spec();
        Box::new(FixedPolicy::new(ActionValue::Continuous(vec![0.0; 4]), spec.leader_obs.dim()))
    } else {
        ppo_leader(&env, cfg, cfg.seed)?
    };
    let game = train_game(env, leader, cfg, cfg.training_iterations, cfg.seed, pool)?;
    sink.training(&game.report)?;
    let episodes = game.evaluate(None, false, &eval_seeds(cfg.seed, &[], cfg.rollouts), pool)?;
    sink.episodes("eval", &episodes)?;
    Ok(counts(&game))
}

/// Reads one price per line; blank lines and `#` comments are skipped.
pub fn read_target(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: f64 = line
            .parse()
            .map_err(|_| Error::config(format!("{}:{}: not a number: {line}", path.display(), i + 1)))?;
        out.push(v);
    }
    if out.is_empty() {
        return Err(Error::config(format!("{}: no prices", path.display())));
    }
    Ok(out)
}

/// Simulates a target price series: producers trained under penalties fixed
/// at `calibration.target_theta`, then `target_rollouts` exploring episodes.
pub fn synthetic_target(cfg: &ExperimentConfig, env_cfg: &CobwebConfig, pool: Option<&rayon::ThreadPool>) -> Result<Vec<f64>> {
    let cal = cfg.calibration_config();
    let env = Cobweb::new(env_cfg.clone())?;
    let obs_dim = env.spec().leader_obs.dim();
    let leader = Box::new(FixedPolicy::new(ActionValue::Continuous(cal.target_theta.clone()), obs_dim));
    let seed = rng::derive(cfg.seed, &[tag::TARGET]);
    let iterations = cal.target_training_iterations.unwrap_or(cfg.training_iterations);
    let game = train_game(env, leader, cfg, iterations, seed, pool)?;
    let episodes = game.evaluate(None, true, &eval_seeds(seed, &[], cal.target_rollouts), pool)?;
    Ok(episodes.iter().flat_map(|e| e.step_metrics["price"].iter().copied()).collect())
}

fn calibrate(
    cfg: &ExperimentConfig,
    env_cfg: CobwebConfig,
    sink: &mut RecordSink,
    pool: Option<&rayon::ThreadPool>,
) -> Result<Counts> {
    let cal = cfg.calibration_config();
    let target = match &cal.target_file {
        Some(path) => read_target(path)?,
        None => synthetic_target(cfg, &env_cfg, pool)?,
    };
    let env = Cobweb::new(env_cfg.clone())?.with_target(target.clone())?;
    let spec = env.spec();
    let bounds = env_cfg.theta_bounds();
    let leader: Box<dyn Learner> = match cal.outer {
        Outer::Rl => ppo_leader(&env, cfg, cfg.seed)?,
        Outer::Bayes => Box::new(BayesLeader::new(
            bounds.clone(),
            spec.leader_obs.dim(),
            cal.bayes,
            rng::derive(cfg.seed, &[tag::INIT, 0]),
        )?),
        Outer::Fixed => {
            let theta = cal.fixed_theta.clone().unwrap_or_else(|| vec![0.0; bounds.len()]);
            Box::new(FixedPolicy::new(ActionValue::Continuous(theta), spec.leader_obs.dim()))
        }
    };
    let game = train_game(env, leader, cfg, cfg.training_iterations, cfg.seed, pool)?;
    sink.training(&game.report)?;

    let seeds = eval_seeds(cfg.seed, &[], cfg.rollouts);
    let episodes = game.evaluate(None, true, &seeds, pool)?;
    sink.episodes("eval", &episodes)?;
    for (r, ep) in episodes.iter().enumerate() {
        let m = bootstrap_calibration(
            &ep.step_metrics["price"],
            &target,
            cal.bootstrap_resamples,
            rng::derive(cfg.seed, &[tag::EVAL, 1, r as u64]),
        )?;
        sink.push("eval.bootstrap_mae", 0, r as u64, m.mae)?;
        sink.push("eval.bootstrap_rmse", 0, r as u64, m.rmse)?;
    }

    // Rational-expectations reference on the same noise draws.
    let rational = RationalProducer::new(&env_cfg.params())?;
    let zero = FixedPolicy::new(ActionValue::Continuous(vec![0.0; bounds.len()]), spec.leader_obs.dim());
    let opts = RolloutOptions {
        horizon: spec.horizon,
        leader_action_period: game.leader_action_period,
        explore_leader: false,
        explore_followers: false,
    };
    let actors: Vec<&dyn Actor> = vec![&rational; spec.n_followers];
    let reference = collect_episodes(&game.env, &zero, &actors, &game.env.default_characteristics(), &opts, &seeds, pool)?;
    for (r, ep) in reference.iter().enumerate() {
        let m = bootstrap_calibration(
            &ep.step_metrics["price"],
            &target,
            cal.bootstrap_resamples,
            rng::derive(cfg.seed, &[tag::EVAL, 1, r as u64]),
        )?;
        sink.push("baseline.equilibrium_bootstrap_mae", 0, r as u64, m.mae)?;
        sink.push("baseline.equilibrium_calibration_mae", 0, r as u64, ep.episode_metrics["calibration_mae"])?;
    }
    Ok(counts(&game))
}

fn scenario(
    cfg: &ExperimentConfig,
    env: EntryGame,
    sink: &mut RecordSink,
    pool: Option<&rayon::ThreadPool>,
) -> Result<Counts> {
    let leader: Box<dyn Learner> = if env.config().tax_enabled {
        ppo_leader(&env, cfg, cfg.seed)?
    } else {
        Box::new(FixedPolicy::new(ActionValue::Continuous(vec![0.0]), env.spec().leader_obs.dim()))
    };
    let game = train_game(env, leader, cfg, cfg.training_iterations, cfg.seed, pool)?;
    sink.training(&game.report)?;
    let episodes = game.evaluate(None, true, &eval_seeds(cfg.seed, &[], cfg.rollouts), pool)?;
    sink.episodes("eval", &episodes)?;
    Ok(counts(&game))
}

/// Formats a preference for a metric name: `0.25` → `w0.25`.
pub fn omega_label(omega: f64) -> String {
    format!("w{omega}")
}

fn meta_mm(
    cfg: &ExperimentConfig,
    env: MarketMaking,
    sink: &mut RecordSink,
    pool: Option<&rayon::ThreadPool>,
) -> Result<Counts> {
    let spec = env.spec();
    let grid = env.config().omega_grid.clone();
    let pinned = env.config().baseline_fixed_omega;
    let sampler = MaxEntropyLeader::new(grid.clone(), spec.leader_obs.dim());

    // Empirical entropy of the preference sampler over a training-sized draw.
    let draws = (cfg.training_iterations * cfg.schedule.leader_episodes_per_update).max(1000);
    let mut freq = vec![0.0; grid.len()];
    let mut r = rng::stream(rng::derive(cfg.seed, &[tag::LEARNER]));
    let obs = env.leader_observe();
    for _ in 0..draws {
        if let Some(k) = sampler.act(&obs, &mut r, true).action.as_discrete() {
            freq[k] += 1.0 / draws as f64;
        }
    }
    sink.push("outer.preference_entropy", 0, 0, preference_entropy(&freq)?)?;

    let game = train_game(env, Box::new(sampler), cfg, cfg.training_iterations, cfg.seed, pool)?;
    sink.training(&game.report)?;
    for (k, &w) in grid.values().iter().enumerate() {
        if pinned.is_some_and(|p| p != w) {
            continue;
        }
        let fixed = FixedPolicy::new(ActionValue::Discrete(k), spec.leader_obs.dim());
        let seeds = eval_seeds(cfg.seed, &[k as u64], cfg.rollouts);
        let episodes = game.evaluate(Some(&fixed), false, &seeds, pool)?;
        sink.episodes(&format!("eval.{}", omega_label(w)), &episodes)?;
    }
    Ok(counts(&game))
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub experiment: String,
    pub task: Task,
    pub seed: u64,
    pub jobs: usize,
    pub version: &'static str,
    pub config: serde_json::Value,
    pub wall_clock_seconds: f64,
    pub leader_updates: usize,
    pub follower_updates: Vec<usize>,
    pub rows: usize,
    pub files: Vec<String>,
}

/// Where a run writes: explicit override, then `output_dir` in the config,
/// then `$BILEVEL_OUTPUT_ROOT/<name>`, then `runs/<name>`.
pub fn output_dir(cfg: &ExperimentConfig, explicit: Option<&Path>) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    if let Some(p) = &cfg.output_dir {
        return p.clone();
    }
    let root = std::env::var_os(OUTPUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"));
    root.join(cfg.experiment_name())
}

pub fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::config(format!("cannot start {jobs} worker threads: {e}")))
}

/// Runs the experiment and writes `metrics.csv`, `summary.json` and
/// `manifest.json` into `dir`.
pub fn run_to_dir(cfg: &ExperimentConfig, dir: &Path, jobs: usize) -> Result<Manifest> {
    let start = Instant::now();
    let pool = thread_pool(jobs)?;
    let result = execute(cfg, Some(&pool))?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let csv_path = dir.join("metrics.csv");
    metrics::write_csv(&csv_path, &result.records)?;
    let summary_path = dir.join("summary.json");
    write_json(&summary_path, &metrics::summarize_records(&result.records))?;

    let manifest = Manifest {
        experiment: cfg.experiment_name(),
        task: cfg.task,
        seed: cfg.seed,
        jobs,
        version: env!("CARGO_PKG_VERSION"),
        config: cfg.resolved()?,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        leader_updates: result.leader_updates,
        follower_updates: result.follower_updates,
        rows: result.records.len(),
        files: vec!["metrics.csv".into(), "summary.json".into(), "manifest.json".into()],
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Process exit code for an error: 2 for configuration problems, 3 for
/// numerical blow-ups, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 2,
        Error::NonFinite { .. } => 3,
        _ => 1,
    }
}
