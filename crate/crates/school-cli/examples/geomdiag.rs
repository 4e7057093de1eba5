//! Spatial-statistics comparison: scripted reference school vs trained-policy
//! school, to locate the residual latent-distribution mismatch.

use school_cli::config::EngineConfig;
use school_cli::pipeline;
use school_learn::metrics::{cluster_histogram, js_divergence};

#[derive(Default)]
struct Stats {
    nn: Vec<f64>,
    radius: Vec<f64>,
    depth: Vec<f64>,
    count: Vec<f64>,
}

impl Stats {
    fn absorb(&mut self, positions: &[(f64, f64, f64)]) {
        self.count.push(positions.len() as f64);
        for (i, &(x, y, z)) in positions.iter().enumerate() {
            self.radius.push((x * x + z * z).sqrt());
            self.depth.push(y);
            let mut best = f64::INFINITY;
            for (j, &(a, b, c)) in positions.iter().enumerate() {
                if i != j {
                    let d = ((x - a).powi(2) + (y - b).powi(2) + (z - c).powi(2)).sqrt();
                    best = best.min(d);
                }
            }
            if best.is_finite() {
                self.nn.push(best);
            }
        }
    }

    fn summary(&self, tag: &str) {
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
        let std = |v: &[f64]| {
            let m = mean(v);
            (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len().max(1) as f64).sqrt()
        };
        println!(
            "[geom] {tag}: nn {:.2}+-{:.2}  radius {:.2}+-{:.2}  depth {:.2}+-{:.2}  alive {:.1}",
            mean(&self.nn),
            std(&self.nn),
            mean(&self.radius),
            std(&self.radius),
            mean(&self.depth),
            std(&self.depth),
            mean(&self.count)
        );
    }
}

fn main() {
    let text = std::fs::read_to_string("/tmp/cal_cache/smoke.toml").unwrap();
    let mut cfg = EngineConfig::from_str(&text).unwrap();
    cfg.seed = std::env::var("CAL_SEED").map(|s| s.parse().unwrap()).unwrap_or(1);
    cfg.apply_threads();
    let cache = std::path::PathBuf::from("/tmp/cal_cache");

    // reference geometry from the archived trajectory (settled half)
    let rows = school_cli::archive::read_trajectory(&cache.join("ref/trajectory.jsonl")).unwrap();
    let mut by_t: std::collections::BTreeMap<u64, Vec<(f64, f64, f64)>> = Default::default();
    for r in &rows {
        by_t.entry(r.t).or_default().push((r.p[0], r.p[1], r.p[2]));
    }
    let mut ref_stats = Stats::default();
    for (t, ps) in &by_t {
        if *t > 1000 && t % 25 == 0 {
            ref_stats.absorb(ps);
        }
    }
    ref_stats.summary("reference      ");

    let mut trainer =
        pipeline::restore_trainer(&cfg, &cache.join("mvae.ckpt"), &cache.join("clusters.json"), &cache.join("ref"), None)
            .unwrap();
    let init_policy = trainer.policy.clone();
    while !trainer.finished() {
        trainer.iterate().unwrap();
    }

    for (tag, policy) in [("init policy    ", &init_policy), ("trained policy ", &trainer.policy.clone())] {
        let batch = trainer.evaluate_rollout(policy, 2000, 777).unwrap();
        // reconstruct geometry by replaying records? records lack positions;
        // instead rerun a traced rollout
        let mut stats = Stats::default();
        let ctx = school_learn::rollout::RolloutContext {
            env_cfg: &trainer.cfg.env,
            camera: &trainer.cfg.camera,
            body: &trainer.cfg.body,
            task: trainer.cfg.task,
            target_speed: trainer.cfg.target_speed,
            agg: &trainer.cfg.agg,
            mvae: &trainer.mvae,
            disc: &trainer.disc,
            style_model: &trainer.style_model,
            k_neighbors: trainer.cfg.k_neighbors,
            deterministic_actions: false,
        };
        let mut env = school_core::sim::init_environment(&trainer.cfg.env, 777 ^ 0x77).unwrap();
        let mut arng = rand::SeedableRng::seed_from_u64(777 ^ 0x88);
        let mut erng = rand::SeedableRng::seed_from_u64(777 ^ 0x99);
        school_learn::rollout::collect_rollouts_traced(
            &mut env,
            policy,
            &trainer.value,
            &ctx,
            2000,
            &mut arng,
            &mut erng,
            |trace| {
                if trace.step > 500 && trace.step % 25 == 0 {
                    let ps: Vec<(f64, f64, f64)> = trace
                        .env
                        .agents
                        .iter()
                        .filter(|a| a.alive)
                        .map(|a| (a.position.x, a.position.y, a.position.z))
                        .collect();
                    stats.absorb(&ps);
                }
            },
        )
        .unwrap();
        stats.summary(tag);
        println!(
            "[geom] {tag} hist {:?} js {:.4}",
            cluster_histogram(&trainer.eval_model, &batch.latents),
            js_divergence(&batch.latents, &trainer.reference_latents, &trainer.eval_model).unwrap()
        );
    }
}
