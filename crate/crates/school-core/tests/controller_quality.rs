//! Closed-loop checks of the scripted controllers, scored by the reward
//! functions they are supposed to satisfy.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use school_core::rewards::{
    Task, TaskNormalizer, circling_target_dir, circling_reward, goal_observation, Goal,
    AggregationParams,
};
use school_core::scripted::{ScriptedPattern, scripted_reference_controller};
use school_core::sim::{EnvConfig, Role, init_environment, step_environment};

#[test]
fn clockwise_controller_scores_high_circling_reward() {
    let cfg = EnvConfig::default();
    let mut env = init_environment(&cfg, 7).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let norm = TaskNormalizer::for_task(Task::CirclingCw, Role::Normal, &cfg.cage, &AggregationParams::default());

    let mut sum = 0.0;
    let mut count = 0usize;
    for _ in 0..500 {
        let actions = scripted_reference_controller(&env, ScriptedPattern::ClockwiseCircle, 1.0, &cfg.limits);
        let (next, _) = step_environment(&env, &actions, &cfg, &mut rng).unwrap();
        for a in next.agents.iter().filter(|a| a.alive) {
            let d = circling_target_dir(a.position, a.forward, true);
            sum += norm.normalize(circling_reward(a, d, 1.0));
            count += 1;
        }
        env = next;
    }
    let mean = sum / count as f64;
    assert!(mean >= 0.8, "mean normalized circling reward {mean:.3} < 0.8");
}

#[test]
fn align_controller_aligns_the_school() {
    let cfg = EnvConfig::default();
    let mut env = init_environment(&cfg, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..400 {
        let actions = scripted_reference_controller(&env, ScriptedPattern::Align, 1.0, &cfg.limits);
        let (next, _) = step_environment(&env, &actions, &cfg, &mut rng).unwrap();
        env = next;
    }
    // mean pairwise forward dot over alive agents should be clearly positive
    let alive: Vec<_> = env.agents.iter().filter(|a| a.alive).collect();
    let mut dots = 0.0;
    let mut n = 0.0;
    for i in 0..alive.len() {
        for j in (i + 1)..alive.len() {
            dots += alive[i].forward.dot(alive[j].forward);
            n += 1.0;
        }
    }
    assert!(dots / n > 0.5, "school not aligned: mean dot {}", dots / n);
}

#[test]
fn aggregate_controller_contracts_the_school() {
    let cfg = EnvConfig::default();
    let mut env = init_environment(&cfg, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);

    let spread = |e: &school_core::sim::EnvState| -> f64 {
        let alive: Vec<_> = e.agents.iter().filter(|a| a.alive).collect();
        let c = alive
            .iter()
            .fold(school_core::vec::Vec3::ZERO, |acc, a| acc + a.position)
            / alive.len() as f64;
        alive.iter().map(|a| a.position.distance(c)).sum::<f64>() / alive.len() as f64
    };

    let before = spread(&env);
    for _ in 0..400 {
        let actions = scripted_reference_controller(&env, ScriptedPattern::Aggregate, 1.0, &cfg.limits);
        let (next, _) = step_environment(&env, &actions, &cfg, &mut rng).unwrap();
        env = next;
    }
    let after = spread(&env);
    assert!(after < 0.7 * before, "school did not contract: {before:.2} -> {after:.2}");
}

#[test]
fn circling_goal_matches_reward_target() {
    let cfg = EnvConfig::default();
    let mut env = init_environment(&cfg, 9).unwrap();
    env.agents[0].position = school_core::vec::Vec3::new(4.0, 1.0, 2.0);
    match goal_observation(Task::CirclingCw, &env, 0, 1.0) {
        Goal::Circling { target_dir, target_speed } => {
            let expect = circling_target_dir(env.agents[0].position, env.agents[0].forward, true);
            assert!((target_dir - expect).norm() < 1e-12);
            assert_eq!(target_speed, 1.0);
        }
        g => panic!("unexpected goal {g:?}"),
    }
}
