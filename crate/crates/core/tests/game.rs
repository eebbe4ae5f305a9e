mod common;

use bilevel_abm::game::{
    alternating_train, collect_episodes, rollout_episode, shared_policy_group, ActionSpace, ActionValue, Actor,
    AgentId, Environment, Learner, PolicyBinding, RolloutOptions, TimescaleSchedule, TrainingOptions,
};
use bilevel_abm::learners::{FixedPolicy, PpoConfig, PpoLearner};
use common::{grid_argmax, StubEnv};

fn options(horizon: usize) -> RolloutOptions {
    RolloutOptions {
        horizon,
        leader_action_period: horizon.max(1),
        explore_leader: true,
        explore_followers: true,
    }
}

fn idle(env: &StubEnv) -> (FixedPolicy, FixedPolicy) {
    let leader = FixedPolicy::new(ActionValue::Continuous(vec![0.2]), 1);
    let follower = FixedPolicy::new(ActionValue::Discrete(0), 1);
    let _ = env;
    (leader, follower)
}

#[test]
fn zero_horizon_gives_empty_trajectories() {
    let mut env = StubEnv::new(3, 0);
    let (leader, follower) = idle(&env);
    let followers: Vec<&dyn Actor> = vec![&follower; 3];
    let theta = env.default_characteristics();
    let ep = rollout_episode(&mut env, &leader, &followers, &theta, &options(0), 1).unwrap();
    assert_eq!(ep.trajectories.len(), 4);
    assert!(ep.trajectories.iter().all(|t| t.is_empty()));
}

#[test]
fn constant_reward_return() {
    let mut env = StubEnv::new(2, 3);
    let (leader, follower) = idle(&env);
    let followers: Vec<&dyn Actor> = vec![&follower; 2];
    let theta = env.default_characteristics();
    let ep = rollout_episode(&mut env, &leader, &followers, &theta, &options(3), 1).unwrap();
    for f in ep.followers() {
        let g = f.discounted_return(0.99).unwrap();
        assert!((g - (1.0 + 0.99 + 0.9801)).abs() < 1e-12, "{g}");
    }
}

#[test]
fn rollouts_are_reproducible() {
    let env = StubEnv::new(4, 20);
    let spec = env.spec();
    let leader = PpoLearner::new(&spec.leader_action, vec![1.0], PpoConfig::default(), 3).unwrap();
    let follower = PpoLearner::new(&spec.follower_action, vec![1.0], PpoConfig::default(), 4).unwrap();
    let followers: Vec<&dyn Actor> = vec![&follower; 4];
    let theta = env.default_characteristics();
    let seeds = [11, 12, 13];
    let a = collect_episodes(&env, &leader, &followers, &theta, &options(20), &seeds, None).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let b = collect_episodes(&env, &leader, &followers, &theta, &options(20), &seeds, Some(&pool)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn policy_binding_counts() {
    let n = 10;
    assert_eq!(PolicyBinding::shared(n).n_groups(), 1);
    assert_eq!(PolicyBinding::individual(n).n_groups(), n);
    let first: Vec<AgentId> = (0..5).map(AgentId::follower).collect();
    let second: Vec<AgentId> = (5..10).map(AgentId::follower).collect();
    let binding = PolicyBinding::new(
        n,
        vec![shared_policy_group(&first).unwrap(), shared_policy_group(&second).unwrap()],
    )
    .unwrap();
    assert_eq!(binding.n_groups(), 2);

    let mut env = StubEnv::new(n, 2);
    let (leader, follower) = idle(&env);
    let followers: Vec<&dyn Actor> = vec![&follower; n];
    let theta = env.default_characteristics();
    let ep = rollout_episode(&mut env, &leader, &followers, &theta, &options(2), 5).unwrap();
    let buffers = binding.partition(ep.followers());
    assert_eq!(buffers.iter().map(Vec::len).collect::<Vec<_>>(), vec![5, 5]);

    assert!(shared_policy_group(&[AgentId::LEADER]).is_err());
    assert!(PolicyBinding::new(n, vec![shared_policy_group(&first).unwrap()]).is_err());
}

fn train_options(horizon: usize) -> TrainingOptions {
    TrainingOptions {
        horizon,
        gamma: 0.99,
        episodes_per_update: 2,
        leader_episodes_per_update: 2,
    }
}

#[test]
fn zero_iterations_change_nothing() {
    let env = StubEnv::new(2, 5);
    let spec = env.spec();
    let mut leader = PpoLearner::new(&spec.leader_action, vec![1.0], PpoConfig::default(), 1).unwrap();
    let before = leader.policy().params();
    let mut followers: Vec<Box<dyn Learner>> = vec![Box::new(FixedPolicy::new(ActionValue::Discrete(0), 1))];
    let schedule = TimescaleSchedule {
        inner_updates_per_outer: 1,
        leader_action_period: 5,
        total_outer_iterations: 0,
    };
    let report = alternating_train(
        &env,
        &mut leader,
        &mut followers,
        &PolicyBinding::shared(2),
        &schedule,
        &train_options(5),
        1,
        None,
    )
    .unwrap();
    assert!(report.series.is_empty());
    assert_eq!(report.leader_updates, 0);
    assert_eq!(leader.policy().params(), before);
}

#[test]
fn schedule_accounting() {
    let env = StubEnv::new(3, 4);
    let mut leader = FixedPolicy::new(ActionValue::Continuous(vec![0.5]), 1);
    let mut followers: Vec<Box<dyn Learner>> = vec![Box::new(FixedPolicy::new(ActionValue::Discrete(1), 1))];
    let schedule = TimescaleSchedule {
        inner_updates_per_outer: 4,
        leader_action_period: 4,
        total_outer_iterations: 10,
    };
    let report = alternating_train(
        &env,
        &mut leader,
        &mut followers,
        &PolicyBinding::shared(3),
        &schedule,
        &train_options(4),
        2,
        None,
    )
    .unwrap();
    assert_eq!(report.follower_updates, vec![40]);
    assert_eq!(followers[0].updates(), 40);
    assert_eq!(report.leader_updates, 10);
    assert_eq!(leader.updates(), 10);
    assert_eq!(report.series("leader_return").unwrap().len(), 10);
}

/// The leader's objective `−(θ − 0.5)²` on `[0, 2]`; the untrained policy
/// starts at the midpoint θ = 1.
pub fn train_quadratic_bowl(iterations: usize) -> f64 {
    let env = StubEnv::with_theta_max(1, 1, 2.0);
    let cfg = PpoConfig {
        hidden: vec![],
        learning_rate: 0.02,
        minibatch_size: 32,
        epochs_per_update: 4,
        ..PpoConfig::default()
    };
    let mut leader = PpoLearner::new(&ActionSpace::Continuous(vec![(0.0, 2.0)]), vec![1.0], cfg, 9).unwrap();
    let mut followers: Vec<Box<dyn Learner>> = vec![Box::new(FixedPolicy::new(ActionValue::Discrete(0), 1))];
    let schedule = TimescaleSchedule {
        inner_updates_per_outer: 1,
        leader_action_period: 1,
        total_outer_iterations: iterations,
    };
    let opts = TrainingOptions {
        horizon: 1,
        gamma: 0.99,
        episodes_per_update: 1,
        leader_episodes_per_update: 32,
    };
    alternating_train(&env, &mut leader, &mut followers, &PolicyBinding::shared(1), &schedule, &opts, 4, None).unwrap();
    let mut r = bilevel_abm::rng::stream(0);
    let greedy = leader.act(&bilevel_abm::game::Observation(vec![0.0]), &mut r, false);
    greedy.action.as_continuous().unwrap()[0]
}

#[test]
fn leader_finds_the_bowl_minimum() {
    let oracle = grid_argmax(|t| -(t - 0.5f64).powi(2), 0.0, 2.0, 2000);
    let theta = train_quadratic_bowl(200);
    assert!((theta - oracle).abs() <= 0.05, "θ = {theta}, oracle {oracle}");
}
