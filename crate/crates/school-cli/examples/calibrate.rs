//! Timing and learning-quality calibration for the closed-loop smoke
//! configuration used by the acceptance suite.

use school_cli::config::EngineConfig;
use school_cli::pipeline::{self, GenPattern};
use school_core::scripted::ScriptedPattern;
use std::time::Instant;

const SMOKE: &str = r#"
seed = 7
threads = 0

[sim]
agent_count = 50

[camera]
width = 64
height = 64

[observation]
patch_size = 16

[mvae]
dim = 32
enc_layers = 2
dec_layers = 1
heads = 4
mlp_hidden = 64
latent = 100
epochs = 200
batch = 16
lr = 0.001
max_clips = 130

[cluster]
method = "tsne"
perplexity = 30.0
k_max = 10
restarts = 10

[train]
task = "circling_cw"
policy_hidden = [64, 64]
value_hidden = [64, 64]
log_std = [-2.5, -1.8, -2.5]
ppo_epochs = 3
minibatch = 1000
horizon = 500
total_env_steps = 50000
lr_policy = 0.0003
lr_value = 0.003
lr_disc = 0.0002
disc_updates = 4
disc_batch = 256
checkpoint_interval = 0
"#;

fn main() {
    let mut cfg = EngineConfig::from_str(SMOKE).unwrap();
    if let Ok(epochs) = std::env::var("CAL_EPOCHS") {
        cfg.mvae.epochs = epochs.parse().unwrap();
    }
    if let Ok(steps) = std::env::var("CAL_STEPS") {
        cfg.train.total_env_steps = steps.parse().unwrap();
    }
    if let Ok(v) = std::env::var("CAL_NO_CLUSTERING") {
        cfg.train.no_clustering = v == "1";
    }
    cfg.apply_threads();
    let cache = std::path::PathBuf::from("/tmp/cal_cache");
    std::fs::create_dir_all(&cache).unwrap();
    let ref_dir = cache.join("ref");
    let rnd_dir = cache.join("rnd");
    let mvae_ckpt = cache.join("mvae.ckpt");
    let clusters = cache.join("clusters.json");

    let t0 = Instant::now();
    if !mvae_ckpt.exists() {
        let g = pipeline::cmd_gen_reference(
            &cfg,
            GenPattern::Scripted(ScriptedPattern::ClockwiseCircle),
            2000,
            &ref_dir,
            None,
        )
        .unwrap();
        pipeline::cmd_gen_reference(&cfg, GenPattern::Random, 600, &rnd_dir, Some(1234)).unwrap();
        println!("[cal] gen: {} ref clips in {:.1}s", g.clip_count, t0.elapsed().as_secs_f64());

        let t1 = Instant::now();
        let tm = pipeline::cmd_train_mvae(&cfg, &[ref_dir.as_path(), rnd_dir.as_path()], &mvae_ckpt, None)
            .unwrap();
        println!(
            "[cal] mvae: {} clips, recon {:.5} -> {:.5} in {:.1}s",
            tm.clip_count,
            tm.first.recon,
            tm.last.recon,
            t1.elapsed().as_secs_f64()
        );

        let t2 = Instant::now();
        let model = pipeline::cmd_build_clusters(&cfg, &mvae_ckpt, &ref_dir, &clusters, None).unwrap();
        println!(
            "[cal] clusters: K={} weights {:?} in {:.1}s",
            model.k,
            model.weights,
            t2.elapsed().as_secs_f64()
        );
    } else {
        println!("[cal] reusing cached artifacts in /tmp/cal_cache");
    }

    if let Ok(seed) = std::env::var("CAL_SEED") {
        cfg.seed = seed.parse().unwrap();
    }
    let t3 = Instant::now();
    let mut trainer = pipeline::restore_trainer(&cfg, &mvae_ckpt, &clusters, &ref_dir, None).unwrap();
    let init_policy = trainer.policy.clone();

    // random-policy baseline before any training
    let baseline_batch = trainer.evaluate_rollout(&trainer.policy, 1000, 999).unwrap();
    let baseline = pipeline::batch_task_return(&baseline_batch);
    let js_init = school_learn::metrics::js_divergence(
        &baseline_batch.latents,
        &trainer.reference_latents,
        &trainer.eval_model,
    )
    .unwrap();
    println!("[cal] random-policy baseline task return: {baseline:.4} (js {js_init:.4} over {} clips)", baseline_batch.latents.len());

    let mut js0 = f64::NAN;
    while !trainer.finished() {
        let log = trainer.iterate().unwrap();
        if log.iteration == 0 {
            js0 = log.js_to_reference;
        }
        if log.iteration % 10 == 0 || trainer.finished() {
            println!(
                "[cal] iter {:>3} steps {:>6} total {:.3} style {:.3} task {:.3} js {:.3} disc {:.3} ep_len {:.0} ({:.0}s)",
                log.iteration,
                log.env_steps,
                log.mean_total,
                log.mean_style,
                log.mean_task,
                log.js_to_reference,
                log.disc_loss,
                log.mean_episode_len,
                t3.elapsed().as_secs_f64()
            );
        }
    }
    let train_time = t3.elapsed().as_secs_f64();

    let eval_batch = trainer.evaluate_rollout(&trainer.policy, 1000, 999).unwrap();
    let final_return = pipeline::batch_task_return(&eval_batch);
    let init_big = trainer.evaluate_rollout(&init_policy, 2000, 777).unwrap();
    let final_big = trainer.evaluate_rollout(&trainer.policy, 2000, 777).unwrap();
    let js_init_big = school_learn::metrics::js_divergence(
        &init_big.latents, &trainer.reference_latents, &trainer.eval_model).unwrap();
    let js_final_big = school_learn::metrics::js_divergence(
        &final_big.latents, &trainer.reference_latents, &trainer.eval_model).unwrap();
    println!("[cal] eval-rollout js (200 clips): init {js_init_big:.4} -> trained {js_final_big:.4} (drop {:.1}%)",
        100.0 * (1.0 - js_final_big / js_init_big));
    let last = trainer.logs.last().unwrap();
    let quarter = trainer.logs.len() / 4;
    let style_first: f64 =
        trainer.logs[..quarter].iter().map(|l| l.mean_style).sum::<f64>() / quarter as f64;
    let style_last: f64 =
        trainer.logs[trainer.logs.len() - quarter..].iter().map(|l| l.mean_style).sum::<f64>()
            / quarter as f64;

    println!("\n[cal] ===== summary =====");
    println!("[cal] cbil time: {train_time:.0}s total {:.0}s", t0.elapsed().as_secs_f64());
    println!("[cal] task return: trained {final_return:.4} vs baseline {baseline:.4} (x{:.2})", final_return / baseline.max(1e-9));
    println!("[cal] js: iter0 {js0:.4} -> final {:.4} (drop {:.1}%)", last.js_to_reference, 100.0 * (1.0 - last.js_to_reference / js0));
    println!("[cal] style mean: first quarter {style_first:.4} -> last quarter {style_last:.4}");
}
