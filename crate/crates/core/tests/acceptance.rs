//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. `ACCEPTANCE_ONLY=2,3` restricts the run to a subset.

mod common;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use statrs::distribution::{ContinuousCDF, StudentsT};

use bilevel_abm::envs::cobweb::{
    calibration_metrics, calibrator_reward, equilibrium_price, market_price, penalized_producer_objective,
    producer_reward, supply, CobwebParams, RationalProducer,
};
use bilevel_abm::envs::entry::{base_reward, mean_abs_pct_change, scenario_reward, tobin_adjusted_reward, DemandHistory};
use bilevel_abm::envs::mm::{lt_decide, mm_reward, pnl, price_step, quote_prices, Side};
use bilevel_abm::envs::taxai::{government_reward, household_reward, hsv_tax, wage_rate, CAPITAL_ELASTICITY};
use bilevel_abm::envs::{Cobweb, CobwebConfig, EntryConfig, EntryGame, MarketMaking, MmConfig, TaxAi, TaxAiConfig};
use bilevel_abm::game::{
    alternating_train, collect_episodes, discounted_return, rollout_episode, ActionSpace, ActionValue, Actor,
    AgentId, Environment, Learner, Observation, PolicyBinding, RolloutOptions, TimescaleSchedule,
    TrainingOptions, Trajectory, Transition,
};
use bilevel_abm::harness::run::{omega_label, synthetic_target};
use bilevel_abm::harness::{execute, exit_code, run_to_dir, EnvConfig, ExperimentConfig, Outer, RunResult};
use bilevel_abm::learners::policy::{Dist, Head, PolicySpec};
use bilevel_abm::learners::{
    bayes_suggest, gae_advantages, kl_information_cost, max_entropy_sample, preference_entropy, surrogate_loss,
    AcquisitionConfig, FixedPolicy, PolicySample, PpoConfig, PpoLearner, PreferenceGrid, SurrogateCoeffs,
    SurrogateState,
};
use bilevel_abm::metrics::{gini, summarize_rollouts, welfare_curve};
use bilevel_abm::{rng, Error};
use common::{grid_argmax, StubEnv};

struct Verdict {
    pass: bool,
    detail: String,
}

type Criterion = fn() -> Verdict;

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&configs_dir().join(name)).expect("checked-in config parses")
}

fn with_env(mut cfg: ExperimentConfig, key: &str, value: impl Into<toml::Value>) -> ExperimentConfig {
    cfg.env.insert(key.to_string(), value.into());
    cfg.validate().expect("override keeps the config valid");
    cfg
}

fn run(cfg: &ExperimentConfig) -> RunResult {
    execute(cfg, None).unwrap_or_else(|e| panic!("{} failed: {e}", cfg.experiment_name()))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_var(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)
}

/// One-sided Welch test of `mean(a) > mean(b)`; returns the p-value.
fn welch_greater(a: &[f64], b: &[f64]) -> f64 {
    let (va, vb) = (sample_var(a) / a.len() as f64, sample_var(b) / b.len() as f64);
    let diff = mean(a) - mean(b);
    let se = (va + vb).sqrt();
    if se == 0.0 {
        return if diff > 0.0 { 0.0 } else { 1.0 };
    }
    let df = (va + vb).powi(2)
        / (va.powi(2) / (a.len() as f64 - 1.0) + vb.powi(2) / (b.len() as f64 - 1.0));
    let t = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    1.0 - t.cdf(diff / se)
}

// ---------------------------------------------------------------- criterion 1

#[derive(Default)]
struct Oracles {
    checked: usize,
    failures: Vec<String>,
}

impl Oracles {
    fn close(&mut self, what: &str, got: f64, want: f64) {
        self.within(what, got, want, 1e-9);
    }

    fn within(&mut self, what: &str, got: f64, want: f64, tol: f64) {
        self.checked += 1;
        let ok = (got - want).abs() <= tol;
        if !ok {
            self.failures.push(format!("{what}: got {got}, want {want}"));
        }
    }

    fn holds(&mut self, what: &str, ok: bool) {
        self.checked += 1;
        if !ok {
            self.failures.push(what.to_string());
        }
    }
}

fn core_oracles(o: &mut Oracles) {
    o.close("return γ=1", discounted_return(&[1.0, 1.0, 1.0], 1.0).unwrap(), 3.0);
    o.close("return γ=0", discounted_return(&[5.0, 100.0, 100.0], 0.0).unwrap(), 5.0);
    o.close("return γ=0.5", discounted_return(&[1.0, 2.0, 3.0], 0.5).unwrap(), 2.75);

    let idle_leader = FixedPolicy::new(ActionValue::Continuous(vec![0.2]), 1);
    let idle = FixedPolicy::new(ActionValue::Discrete(0), 1);
    let followers: Vec<&dyn Actor> = vec![&idle; 2];
    let opts = |h: usize| RolloutOptions {
        horizon: h,
        leader_action_period: h.max(1),
        explore_leader: true,
        explore_followers: true,
    };
    let mut env = StubEnv::new(2, 0);
    let theta = env.default_characteristics();
    let ep = rollout_episode(&mut env, &idle_leader, &followers, &theta, &opts(0), 1).unwrap();
    o.holds("horizon 0 gives empty trajectories", ep.trajectories.iter().all(|t| t.is_empty()));
    let mut env = StubEnv::new(2, 3);
    let ep = rollout_episode(&mut env, &idle_leader, &followers, &theta, &opts(3), 1).unwrap();
    o.close("stub return", ep.followers()[0].discounted_return(0.99).unwrap(), 2.9701);
    let again = rollout_episode(&mut env, &idle_leader, &followers, &theta, &opts(3), 1).unwrap();
    o.holds("rollout determinism", ep == again);

    // schedule arithmetic with counting learners
    let env = StubEnv::new(3, 4);
    let mut leader = FixedPolicy::new(ActionValue::Continuous(vec![0.5]), 1);
    let mut learners: Vec<Box<dyn Learner>> = vec![Box::new(FixedPolicy::new(ActionValue::Discrete(1), 1))];
    let report = alternating_train(
        &env,
        &mut leader,
        &mut learners,
        &PolicyBinding::shared(3),
        &TimescaleSchedule {
            inner_updates_per_outer: 4,
            leader_action_period: 4,
            total_outer_iterations: 10,
        },
        &TrainingOptions {
            horizon: 4,
            gamma: 0.99,
            episodes_per_update: 1,
            leader_episodes_per_update: 1,
        },
        2,
        None,
    )
    .unwrap();
    o.holds("K=4 × 10 follower updates", learners[0].updates() == 40 && report.follower_updates == vec![40]);
    o.holds("10 leader updates", leader.updates() == 10);
    o.holds("one shared policy", PolicyBinding::shared(10).n_groups() == 1);
    o.holds("one policy each", PolicyBinding::individual(10).n_groups() == 10);

    // quadratic bowl: leader starts at θ = 1 on [0, 2]
    let env = StubEnv::with_theta_max(1, 1, 2.0);
    let cfg = PpoConfig {
        hidden: vec![],
        learning_rate: 0.02,
        minibatch_size: 32,
        epochs_per_update: 4,
        ..PpoConfig::default()
    };
    let mut leader = PpoLearner::new(&ActionSpace::Continuous(vec![(0.0, 2.0)]), vec![1.0], cfg, 9).unwrap();
    let mut idle_learners: Vec<Box<dyn Learner>> = vec![Box::new(FixedPolicy::new(ActionValue::Discrete(0), 1))];
    alternating_train(
        &env,
        &mut leader,
        &mut idle_learners,
        &PolicyBinding::shared(1),
        &TimescaleSchedule {
            inner_updates_per_outer: 1,
            leader_action_period: 1,
            total_outer_iterations: 200,
        },
        &TrainingOptions {
            horizon: 1,
            gamma: 0.99,
            episodes_per_update: 1,
            leader_episodes_per_update: 32,
        },
        4,
        None,
    )
    .unwrap();
    let greedy = leader.act(&Observation(vec![0.0]), &mut rng::stream(0), false);
    let oracle = grid_argmax(|t| -(t - 0.5f64).powi(2), 0.0, 2.0, 2000);
    o.within("bowl leader θ", greedy.action.as_continuous().unwrap()[0], oracle, 0.05);
}

fn learner_oracles(o: &mut Oracles) {
    o.holds("gae single", gae_advantages(&[1.0], &[0.0, 0.0], 1.0, 1.0).unwrap() == vec![1.0]);
    let a = gae_advantages(&[1.0, 1.0], &[0.5, 0.5, 0.0], 1.0, 0.0).unwrap();
    o.close("gae λ=0 [0]", a[0], 1.0);
    o.close("gae λ=0 [1]", a[1], 0.5);
    let r = [0.3, -1.2, 2.0, 0.7];
    let adv = gae_advantages(&r, &[0.0; 5], 0.9, 1.0).unwrap();
    for t in 0..r.len() {
        o.close("gae zero baseline", adv[t], discounted_return(&r[t..], 0.9).unwrap());
    }

    // zero advantages
    let cfg = PpoConfig {
        learning_rate: 0.01,
        hidden: vec![8],
        normalize_advantages: false,
        ..PpoConfig::default()
    };
    let mut learner = PpoLearner::new(&ActionSpace::Continuous(vec![(0.0, 1.0)]), vec![1.0, 1.0], cfg, 5).unwrap();
    let before = learner.policy().params();
    let mut r = rng::stream(1);
    let samples: Vec<PolicySample> = (0..50)
        .map(|i| {
            let obs = vec![i as f64 / 50.0, -0.3];
            let d = learner.act(&Observation(obs.clone()), &mut r, true);
            PolicySample {
                observation: obs,
                sample: d.sample,
                old_log_prob: d.log_prob,
                advantage: 0.0,
                value_target: 1.0,
            }
        })
        .collect();
    learner.update_on_samples(samples).unwrap();
    let change = before
        .iter()
        .zip(learner.policy().params())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    o.holds("zero advantages leave the policy", change < 1e-8);

    // two-armed bandit with a 2-parameter policy
    let cfg = PpoConfig {
        learning_rate: 0.05,
        hidden: vec![],
        epochs_per_update: 4,
        minibatch_size: 64,
        ..PpoConfig::default()
    };
    let mut bandit = PpoLearner::new(&ActionSpace::Discrete(2), vec![], cfg, 3).unwrap();
    let mut r = rng::stream(99);
    let obs = Observation(vec![]);
    let mut best = 0.0;
    for _ in 0..200 {
        let singles: Vec<Trajectory> = (0..64)
            .map(|_| {
                let d = bandit.act(&obs, &mut r, true);
                let reward = if d.action == ActionValue::Discrete(1) { 1.0 } else { 0.0 };
                Trajectory {
                    agent: AgentId::follower(0),
                    horizon: 1,
                    transitions: vec![Transition {
                        observation: obs.clone(),
                        action: Some(d.action),
                        sample: d.sample,
                        log_prob: d.log_prob,
                        value: d.value,
                        reward,
                    }],
                }
            })
            .collect();
        bandit.update(&singles.iter().collect::<Vec<_>>()).unwrap();
        if let Dist::Categorical { probs } = bandit.policy().forward(&[]) {
            best = probs[1];
        }
        if best > 0.9 {
            break;
        }
    }
    o.holds("bandit arm 1 above 0.9 within 200 updates", best > 0.9);

    // finite-difference check on a 5-parameter Gaussian policy
    let mut r = rng::stream(21);
    let old_policy = PolicySpec::new(3, &[], Head::DiagonalGaussian { bounds: vec![(0.0, 1.0)] }, vec![1.0; 3], &mut r).unwrap();
    o.holds("5 parameters", old_policy.n_params() == 5);
    let samples: Vec<PolicySample> = (0..30)
        .map(|i| {
            use rand::Rng;
            let obs: Vec<f64> = (0..3).map(|_| r.random_range(-1.0..1.0)).collect();
            let (sample, lp) = old_policy.sample(&old_policy.forward(&obs), &mut r, true);
            PolicySample {
                observation: obs,
                sample,
                old_log_prob: lp,
                advantage: (i as f64 * 0.37).sin() * 2.0,
                value_target: 0.0,
            }
        })
        .collect();
    let old: Vec<Dist> = samples.iter().map(|s| old_policy.forward(&s.observation)).collect();
    let mut policy = old_policy.clone();
    let shifted: Vec<f64> = policy.params().iter().enumerate().map(|(i, p)| p + 0.03 * (i as f64 - 2.0)).collect();
    policy.set_params(&shifted);
    let coeffs = SurrogateCoeffs {
        clip_ratio: 0.2,
        kl_coeff: 0.7,
        entropy_coeff: 0.05,
    };
    let (_, grad) = surrogate_loss(&policy, &samples, &old, coeffs);
    let base = policy.params();
    let h = 1e-6;
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] += h;
        policy.set_params(&p);
        let up = surrogate_loss(&policy, &samples, &old, coeffs).0;
        p[i] -= 2.0 * h;
        policy.set_params(&p);
        let dn = surrogate_loss(&policy, &samples, &old, coeffs).0;
        policy.set_params(&base);
        let fd = (up - dn) / (2.0 * h);
        let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-8);
        o.holds(&format!("finite differences, parameter {i} (rel {rel:.2e})"), rel < 1e-4);
    }

    // Bayesian optimisation
    let mut state = SurrogateState::new(AcquisitionConfig::default());
    let mut r = rng::stream(7);
    let x = bayes_suggest(&mut state, &[(0.0, 1.0), (0.0, 1.0)], &mut r).unwrap();
    o.holds("suggestion in the unit square", x.iter().all(|v| (0.0..=1.0).contains(v)));
    let f = |t: f64| -(t - 0.3f64).powi(2);
    let mut state = SurrogateState::new(AcquisitionConfig::default());
    for _ in 0..20 {
        let t = bayes_suggest(&mut state, &[(0.0, 1.0)], &mut r).unwrap();
        state.observe(t.clone(), f(t[0])).unwrap();
    }
    let oracle = grid_argmax(f, 0.0, 1.0, 1000);
    o.within("bayes best θ", state.best().unwrap().0[0], oracle, 0.05);
    let mut state = SurrogateState::new(AcquisitionConfig::default());
    state.observe(vec![0.4], 1.0).unwrap();
    state.observe(vec![0.4], 1.0).unwrap();
    o.holds("duplicate observations fit", bayes_suggest(&mut state, &[(0.0, 1.0)], &mut r).is_ok());

    // preference sampler and information cost
    let single = PreferenceGrid::new(vec![0.5]).unwrap();
    o.close("singleton grid", max_entropy_sample(&single, 42), 0.5);
    let grid = PreferenceGrid::default();
    let mut counts = [0usize; 5];
    for s in 0..100_000u64 {
        let w = max_entropy_sample(&grid, rng::derive(1, &[s]));
        counts[grid.nearest(w)] += 1;
    }
    let freqs: Vec<f64> = counts.iter().map(|c| *c as f64 / 1e5).collect();
    o.holds("frequencies in [0.19, 0.21]", freqs.iter().all(|f| (0.19..=0.21).contains(f)));
    o.close("uniform entropy", preference_entropy(&[0.2; 5]).unwrap(), 5f64.ln());
    o.close("degenerate entropy", preference_entropy(&[1.0, 0.0, 0.0, 0.0, 0.0]).unwrap(), 0.0);
    o.holds("entropy bound", preference_entropy(&freqs).unwrap() <= 5f64.ln() + 1e-12);
    o.close("KL identical", kl_information_cost(&[0.25; 4], &[0.25; 4]).unwrap(), 0.0);
    o.close("KL deterministic", kl_information_cost(&[0.0, 1.0, 0.0], &[1.0 / 3.0; 3]).unwrap(), 3f64.ln());
    o.close(
        "KL (0.75, 0.25)",
        kl_information_cost(&[0.75, 0.25], &[0.5, 0.5]).unwrap(),
        0.75 * 1.5f64.ln() + 0.25 * 0.5f64.ln(),
    );
}

fn taxai_oracles(o: &mut Oracles) {
    o.close("tax zero", hsv_tax(3.7, 0.0, 0.0).unwrap(), 0.0);
    o.close("flat tax", hsv_tax(10.0, 0.5, 0.0).unwrap(), 5.0);
    o.close("progressive tax", hsv_tax(2.0, 0.3, 0.5).unwrap(), 2.0 - 1.4 * 2f64.sqrt());
    o.close("wage K=L", wage_rate(2.5, 2.5, CAPITAL_ELASTICITY).unwrap(), 2.0 / 3.0);
    o.close("wage K=8", wage_rate(8.0, 1.0, CAPITAL_ELASTICITY).unwrap(), 4.0 / 3.0);
    o.holds(
        "wage increasing in K",
        wage_rate(1.0, 2.0, CAPITAL_ELASTICITY).unwrap() < wage_rate(1.5, 2.0, CAPITAL_ELASTICITY).unwrap(),
    );
    o.close("utility c=1 h=0", household_reward(1.0, 0.0, 2.0), 0.0);
    o.close("utility c=1 h=1 ζ=1", household_reward(1.0, 1.0, 1.0), -0.5);
    o.close("utility c=e", household_reward(std::f64::consts::E, 0.0, 2.0), 1.0);
    o.close("welfare zeros", government_reward(&[0.0; 3]), 0.0);
    o.close("welfare sum", government_reward(&[-0.5, 1.0, 0.25]), 0.75);
    o.close("welfare permuted", government_reward(&[0.25, -0.5, 1.0]), 0.75);

    let env = TaxAi::new(TaxAiConfig::default()).unwrap();
    let spec = env.spec();
    o.holds("household obs 8", spec.follower_obs.dim() == 8);
    o.holds("government obs 7", spec.leader_obs.dim() == 7);
}

fn market_oracles(o: &mut Oracles) {
    o.close("supply at offset", supply(6.0, 2.0, 6.0), 1.0);
    o.close("supply +∞", supply(1e6, 2.0, 6.0), 2.0);
    o.close("supply −∞", supply(-1e6, 2.0, 6.0), 0.0);
    o.close("supply +0.5", supply(6.5, 2.0, 6.0), 1f64.tanh() + 1.0);
    let p = CobwebParams::default();
    o.close("price at offset", market_price(&[6.0; 6], &p, 0.0), 5.2);
    o.close("price zero supply", market_price(&[-1e6; 6], &p, 0.0), 9.2);
    let star = equilibrium_price(&p).unwrap();
    o.within("equilibrium ≈ 5.91", star, 5.91, 0.005);
    o.holds("equilibrium residual", (star - (p.a - 6.0 * supply(star, p.psi, p.offset)) / p.b).abs() < 1e-8);
    let empty = CobwebParams { n_producers: 0, ..p };
    o.close("equilibrium without producers", equilibrium_price(&empty).unwrap(), 9.2);
    o.close("accuracy exact", producer_reward(5.0, 5.0), 1300.0);
    o.close("accuracy off by 1", producer_reward(5.0, 6.0), 1040.0);
    o.close("accuracy floor", producer_reward(5.0, 5.0 + 5f64.sqrt()), 0.0);
    let uniform = vec![1.0 / 21.0; 21];
    let mut onehot = vec![0.0; 21];
    onehot[3] = 1.0;
    o.close("λ = 0", penalized_producer_objective(700.0, 0.0, &onehot, &uniform).unwrap(), 700.0);
    o.close("uniform policy", penalized_producer_objective(700.0, 10.0, &uniform, &uniform).unwrap(), 700.0);
    o.close(
        "deterministic penalty",
        700.0 - penalized_producer_objective(700.0, 10.0, &onehot, &uniform).unwrap(),
        10.0 * 21f64.ln(),
    );
    o.close("calibrator exact", calibrator_reward(5.0, 5.0), 0.0);
    o.close("calibrator 0.2", calibrator_reward(5.0, 5.2), -0.2);
    o.close("calibrator symmetric", calibrator_reward(5.2, 5.0), -0.2);
    let m = calibration_metrics(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
    o.close("identical MAE", m.mae + m.rmse, 0.0);
    let m = calibration_metrics(&[1.1, 0.9], &[1.0, 1.0]).unwrap();
    o.close("MAE ±0.1", m.mae, 0.1);
    o.close("RMSE ±0.1", m.rmse, 0.1);
    let m = calibration_metrics(&[1.0, 1.2], &[1.0, 1.0]).unwrap();
    o.close("MAE 0, 0.2", m.mae, 0.1);
    o.close("RMSE 0, 0.2", m.rmse, 0.02f64.sqrt());
    let env = Cobweb::new(CobwebConfig::default()).unwrap();
    o.holds("calibrator obs n+1", env.spec().leader_obs.dim() == 7);
    o.holds("producer obs 4", env.spec().follower_obs.dim() == 4);

    o.close("stay out", base_reward(false, 17.0, 12.0, 1.0, 2.0), 1.0);
    o.close("enter at capacity", base_reward(true, 12.0, 12.0, 1.0, 2.0), 1.0);
    o.close("enter below capacity", base_reward(true, 10.0, 12.0, 1.0, 2.0), 5.0);
    o.close("zero duty", tobin_adjusted_reward(5.0, true, 0.0, 0.1), 5.0);
    o.close("duty on gain", tobin_adjusted_reward(5.0, true, 0.1, 0.1), 4.5);
    o.close("duty on loss", tobin_adjusted_reward(-3.0, true, 0.1, 0.1), -3.3);
    let mut h = DemandHistory::default();
    for _ in 0..5 {
        h.push(7.0);
    }
    o.close("constant demand", scenario_reward(&h), 0.0);
    let mut h = DemandHistory::default();
    h.push(10.0);
    h.push(12.0);
    o.close("demand [10, 12]", scenario_reward(&h), -2f64.sqrt());
    o.close("mapc constant", mean_abs_pct_change(&[4.0, 4.0, 4.0]).unwrap(), 0.0);
    o.close("mapc [10, 12, 9]", mean_abs_pct_change(&[10.0, 12.0, 9.0]).unwrap(), 0.225);
    o.close("mapc scaled", mean_abs_pct_change(&[30.0, 36.0, 27.0]).unwrap(), 0.225);
    let mut game = EntryGame::new(EntryConfig::default()).unwrap();
    o.holds("trader obs 4, leader obs 2", game.spec().follower_obs.dim() == 4 && game.spec().leader_obs.dim() == 2);
    let theta = game.default_characteristics();
    let obs = game.reset(&theta, 0).unwrap();
    let c = game.capacity();
    o.holds("neutral prior at t = 0", obs[1].0[0] == c && obs[1].0[1] == c);

    o.close("price fixed point", price_step(100.0, 100.0, 0.01, 0.0), 100.0);
    o.close("price reverts", price_step(200.0, 100.0, 0.01, 0.0), 199.0);
    o.close("price floor", price_step(1.0, 100.0, 0.01, -1e3), 0.0);
    let (b, a) = quote_prices(100.0, 0.0);
    o.holds("zero spread", b == 100.0 && a == 100.0);
    let (b, a) = quote_prices(100.0, 1.5);
    o.close("bid", b, 98.5);
    o.close("ask", a, 101.5);
    o.holds("buyer at ask", !lt_decide(Side::Buyer, 101.5, 98.5, 101.5));
    o.holds("buyer above ask", lt_decide(Side::Buyer, 102.5, 98.5, 101.5));
    o.holds(
        "no trades inside the spread",
        !lt_decide(Side::Buyer, 100.0, 99.0, 101.0) && !lt_decide(Side::Seller, 100.0, 99.0, 101.0),
    );
    o.close("no fills", pnl(0, 0, 100.0, 99.0, 101.0), 0.0);
    o.close("pnl 2+1", pnl(2, 1, 100.0, 99.0, 101.0), 3.0);
    o.close("symmetric pnl", pnl(3, 3, 100.0, 98.0, 102.0), 6.0 * 2.0);
    o.close("ω = 1", mm_reward(1.0, 3.0, 7, 20), 0.15);
    o.close("ω = 0", mm_reward(0.0, 3.0, 7, 20), 0.35);
    o.close("ω = 0.5", mm_reward(0.5, 3.0, 3, 20), 0.15);
    let mut desk = MarketMaking::new(MmConfig::default()).unwrap();
    let theta = desk.default_characteristics();
    let obs = desk.reset(&theta, 3).unwrap();
    o.holds("desk obs 2", obs[1].len() == 2);
    o.close("relative price at p0", obs[1].0[0], 1.0);
}

fn metric_oracles(o: &mut Oracles) {
    o.close("gini equal", gini(&[3.0; 4]).unwrap(), 0.0);
    o.close("gini [0, 1]", gini(&[0.0, 1.0]).unwrap(), 0.5);
    o.close("gini one holder", gini(&[0.0, 0.0, 0.0, 1.0]).unwrap(), 0.75);
    let s = summarize_rollouts(&[vec![1.0, 2.0]]).unwrap();
    o.holds("single rollout summary", s.mean == s.min && s.min == s.max && s.mean == vec![1.0, 2.0]);
    let s = summarize_rollouts(&[vec![1.0; 3], vec![3.0; 3]]).unwrap();
    o.holds("two constants", s.mean == vec![2.0; 3] && s.min == vec![1.0; 3] && s.max == vec![3.0; 3]);
    let w = welfare_curve(&[vec![vec![0.0; 4]], vec![vec![0.0; 4]]], 0.9).unwrap();
    o.holds("flat zero welfare", w.values() == vec![0.0, 0.0]);
    let w = welfare_curve(&[vec![vec![1.0, 2.0, 3.0]]], 0.5).unwrap();
    o.close("welfare = discounted return", w.values()[0], 2.75);
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let mut o = Oracles::default();
    core_oracles(&mut o);
    learner_oracles(&mut o);
    taxai_oracles(&mut o);
    market_oracles(&mut o);
    metric_oracles(&mut o);
    let secs = start.elapsed().as_secs_f64();
    let pass = o.failures.is_empty() && secs < 60.0;
    let mut detail = format!("{} oracle checks in {secs:.1}s", o.checked);
    if !o.failures.is_empty() {
        detail.push_str(&format!("; failed: {}", o.failures.join("; ")));
    }
    Verdict { pass, detail }
}

// ------------------------------------------------------------- criteria 2, 3

struct PolicyRuns {
    trained: RunResult,
    free: RunResult,
}

fn policy_runs() -> &'static PolicyRuns {
    static RUNS: std::sync::OnceLock<PolicyRuns> = std::sync::OnceLock::new();
    RUNS.get_or_init(|| {
        let cfg = load("policy-design.toml");
        let free = with_env(cfg.clone(), "free_market", true);
        PolicyRuns {
            trained: run(&cfg),
            free: run(&free),
        }
    })
}

fn criterion_2() -> Verdict {
    let runs = policy_runs();
    let a = runs.trained.values("eval.leader_return");
    let b = runs.free.values("eval.leader_return");
    let p = welch_greater(&a, &b);
    Verdict {
        pass: mean(&a) > mean(&b) && p < 0.05,
        detail: format!(
            "welfare trained {:.2} vs free market {:.2} over {} rollouts, Welch p = {p:.2e}",
            mean(&a),
            mean(&b),
            a.len()
        ),
    }
}

fn criterion_3() -> Verdict {
    let runs = policy_runs();
    let a = mean(&runs.trained.values("eval.gini_assets"));
    let b = mean(&runs.free.values("eval.gini_assets"));
    Verdict {
        pass: a < b,
        detail: format!("asset Gini trained {a:.4} vs free market {b:.4}"),
    }
}

// ---------------------------------------------------------------- criterion 4

fn criterion_4() -> Verdict {
    let cfg = load("calibrate.toml");
    let env_cfg = match cfg.env_config().unwrap() {
        EnvConfig::Cobweb(c) => c,
        _ => unreachable!("calibrate config"),
    };
    let target = synthetic_target(&cfg, &env_cfg, None).expect("synthetic target");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("target.txt");
    let text: String = target.iter().map(|p| format!("{p}\n")).collect();
    std::fs::write(&path, text).unwrap();

    let with_outer = |outer: Outer| {
        let mut c = cfg.clone();
        let mut cal = c.calibration_config();
        cal.outer = outer;
        cal.fixed_theta = None;
        cal.target_file = Some(path.clone());
        c.calibration = Some(cal);
        c
    };
    let rl = mean(&run(&with_outer(Outer::Rl)).values("eval.bootstrap_mae"));
    let rational = mean(&run(&with_outer(Outer::Fixed)).values("eval.bootstrap_mae"));
    let bayes = mean(&run(&with_outer(Outer::Bayes)).values("eval.bootstrap_mae"));
    Verdict {
        pass: rl <= 0.5 * rational && bayes < rational,
        detail: format!(
            "MAE rl {rl:.4}, bayes {bayes:.4}, rational baseline {rational:.4} (rl/baseline {:.3})",
            rl / rational
        ),
    }
}

// ---------------------------------------------------------------- criterion 5

fn criterion_5() -> Verdict {
    let steps = 10_000;
    let cfg = CobwebConfig {
        horizon: steps,
        ..CobwebConfig::default()
    };
    let sigma = cfg.sigma_eps;
    let env = Cobweb::new(cfg.clone()).unwrap();
    let producer = RationalProducer::new(&cfg.params()).unwrap();
    let leader = FixedPolicy::new(ActionValue::Continuous(vec![0.0, 0.0]), env.spec().leader_obs.dim());
    let followers: Vec<&dyn Actor> = vec![&producer; cfg.n_producers];
    let opts = RolloutOptions {
        horizon: steps,
        leader_action_period: steps,
        explore_leader: false,
        explore_followers: false,
    };
    let ep = collect_episodes(&env, &leader, &followers, &env.default_characteristics(), &opts, &[17], None)
        .unwrap()
        .remove(0);
    let prices = &ep.step_metrics["price"];
    let star = equilibrium_price(&cfg.params()).unwrap();
    let gap = (mean(prices) - star).abs();
    let bound = 3.0 * sigma / (steps as f64).sqrt();
    Verdict {
        pass: gap < bound,
        detail: format!("|mean price − p*| = {gap:.2e} < {bound:.2e} over {} steps", prices.len()),
    }
}

// ---------------------------------------------------------------- criterion 6

fn criterion_6() -> Verdict {
    let cfg = load("scenario.toml");
    let mut lower_std = 0;
    let mut lower_mapc = 0;
    let mut rows = Vec::new();
    for c in (2..=18).step_by(2) {
        let taxed = with_env(cfg.clone(), "capacity", c as f64);
        let untaxed = with_env(taxed.clone(), "tax_enabled", false);
        let a = run(&taxed);
        let b = run(&untaxed);
        let (sa, sb) = (a.mean("eval.demand_std").unwrap(), b.mean("eval.demand_std").unwrap());
        let (ma, mb) = (a.mean("eval.mapc").unwrap(), b.mean("eval.mapc").unwrap());
        lower_std += usize::from(sa < sb);
        lower_mapc += usize::from(ma < mb);
        rows.push(format!("C={c}: σ {sa:.3}/{sb:.3}, mapc {ma:.3}/{mb:.3}"));
    }
    Verdict {
        pass: lower_std >= 5 && lower_mapc >= 4,
        detail: format!(
            "duty lowers σ in {lower_std}/9 and mapc in {lower_mapc}/9 [{}]",
            rows.join("; ")
        ),
    }
}

// ---------------------------------------------------------------- criterion 7

fn criterion_7() -> Verdict {
    let cfg = load("meta-mm.toml");
    let conditioned = run(&cfg);
    let grid = PreferenceGrid::default();
    let metric = |run: &RunResult, w: f64, m: &str| run.mean(&format!("step.eval.{}.{m}", omega_label(w))).unwrap();
    let spread = (metric(&conditioned, 0.0, "spread"), metric(&conditioned, 1.0, "spread"));
    let trades = (metric(&conditioned, 0.0, "trades"), metric(&conditioned, 1.0, "trades"));
    let mut matched = 0;
    let mut rows = Vec::new();
    for &w in grid.values() {
        let baseline = run(&with_env(cfg.clone(), "baseline_fixed_omega", w));
        let key = format!("eval.{}.follower_return", omega_label(w));
        let (c, b) = (conditioned.mean(&key).unwrap(), baseline.mean(&key).unwrap());
        // 0.9× of the baseline, read as "within 10% of its magnitude"
        let ok = c >= b - 0.1 * b.abs();
        matched += usize::from(ok);
        rows.push(format!("ω={w}: {c:.2}/{b:.2}"));
    }
    Verdict {
        pass: spread.1 > spread.0 && trades.0 > trades.1 && matched >= 4,
        detail: format!(
            "spread ω=0 {:.3} ω=1 {:.3}; trades ω=0 {:.3} ω=1 {:.3}; reward vs fixed-ω baseline ok at {matched}/5 [{}]",
            spread.0,
            spread.1,
            trades.0,
            trades.1,
            rows.join("; ")
        ),
    }
}

// ---------------------------------------------------------------- criterion 8

fn criterion_8() -> Verdict {
    let mut failures = Vec::new();
    let mut cfg = load("scenario.toml");
    cfg.training_iterations = 2;
    cfg.rollouts = 3;
    cfg.schedule.inner_updates_per_outer = 3;
    let dir = tempfile::tempdir().unwrap();
    let a = run_to_dir(&cfg, &dir.path().join("a"), 1).unwrap();
    run_to_dir(&cfg, &dir.path().join("b"), 1).unwrap();
    run_to_dir(&cfg, &dir.path().join("c"), 3).unwrap();
    let read = |d: &str| std::fs::read(dir.path().join(d).join("metrics.csv")).unwrap();
    if read("a") != read("b") {
        failures.push("repeat run CSV differs".to_string());
    }
    if read("a") != read("c") {
        failures.push("--jobs 3 CSV differs".to_string());
    }
    if a.follower_updates != vec![3 * 2] || a.leader_updates != 2 {
        failures.push(format!("update counts {:?}/{}", a.follower_updates, a.leader_updates));
    }
    let bad = [
        "task = \"scenario\"\nrolouts = 3",
        "task = \"scenario\"\n[learner]\nlearning_rte = 0.1",
        "task = \"scenario\"\n[env]\ncapcity = 3",
        "task = \"scenario\"\n[schedule]\ninner = 3",
        "task = \"policy-desing\"",
    ];
    for text in bad {
        match ExperimentConfig::from_toml(text) {
            Err(e @ Error::Config(_)) if exit_code(&e) == 2 => {}
            other => failures.push(format!("accepted or misclassified {text:?}: {other:?}")),
        }
    }
    Verdict {
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            format!("byte-identical CSVs ({} rows) at 1 and 3 jobs; 6 follower / 2 leader updates; {} bad configs rejected", a.rows, bad.len())
        } else {
            failures.join("; ")
        },
    }
}

fn main() -> ExitCode {
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let criteria: [(u32, &str, Criterion); 8] = [
        (1, "formula oracles", criterion_1),
        (2, "policy design welfare", criterion_2),
        (3, "policy design inequality", criterion_3),
        (4, "calibration recovery", criterion_4),
        (5, "cobweb equilibrium", criterion_5),
        (6, "scenario duty sweep", criterion_6),
        (7, "preference-conditioned market maker", criterion_7),
        (8, "determinism and config strictness", criterion_8),
    ];
    let mut failed = 0;
    for (id, name, check) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let v = check();
        let tag = if v.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!v.pass);
        println!("{tag} {id} {name}: {} ({:.0}s)", v.detail, start.elapsed().as_secs_f64());
    }
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
