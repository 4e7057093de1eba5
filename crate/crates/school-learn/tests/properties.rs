//! Property tests for metric bounds and the style-reward range.

use proptest::prelude::*;
use school_learn::cluster::{ClusterModel, ReduceMethod};
use school_learn::discriminator::style_reward_for_cluster;
use school_learn::metrics::{apd, js_from_distributions};
use school_learn::policy::compute_gae;

fn normalized(v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.iter().map(|x| x / s).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn js_is_bounded_and_symmetric(
        p_raw in proptest::collection::vec(0.01f64..10.0, 2..8),
        q_scale in proptest::collection::vec(0.01f64..10.0, 2..8),
    ) {
        let k = p_raw.len().min(q_scale.len());
        let p = normalized(p_raw[..k].to_vec());
        let q = normalized(q_scale[..k].to_vec());
        let pq = js_from_distributions(&p, &q);
        let qp = js_from_distributions(&q, &p);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&pq));
        prop_assert!((pq - qp).abs() < 1e-12);
        prop_assert!(js_from_distributions(&p, &p).abs() < 1e-12);
    }

    #[test]
    fn style_reward_stays_in_unit_interval(
        score in -1.0f64..=1.0,
        w0 in 0.01f64..1.0,
        w1 in 0.01f64..1.0,
        pick in 0usize..2,
    ) {
        let model = ClusterModel {
            k: 2,
            centers: vec![vec![0.0; 2]; 2],
            weights: normalized(vec![w0, w1]),
            anchors: vec![vec![0.0; 3], vec![1.0; 3]],
            anchor_labels: vec![0, 1],
            method: ReduceMethod::Pca,
        };
        let r = style_reward_for_cluster(score, &model, pick);
        prop_assert!((0.0..=1.0).contains(&r), "r = {r}");
    }

    #[test]
    fn apd_permutation_invariance(
        seed in 0u64..1000,
        n in 2usize..6,
        l in 1usize..12,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let trajs: Vec<Vec<Vec<f64>>> = (0..n)
            .map(|_| (0..l).map(|_| (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect())
            .collect();
        let v = apd(&trajs).unwrap();
        prop_assert!(v >= 0.0);
        let mut rev = trajs.clone();
        rev.reverse();
        prop_assert!((apd(&rev).unwrap() - v).abs() < 1e-12);
    }

    #[test]
    fn gae_zero_rewards_zero_values_gives_zero(
        t in 1usize..30,
        gamma in 0.5f64..1.0,
        lambda in 0.5f64..1.0,
    ) {
        let (adv, ret) =
            compute_gae(&vec![0.0; t], &vec![0.0; t + 1], &vec![false; t], gamma, lambda).unwrap();
        prop_assert!(adv.iter().all(|&a| a == 0.0));
        prop_assert!(ret.iter().all(|&r| r == 0.0));
    }
}
