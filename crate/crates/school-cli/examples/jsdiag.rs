//! Diagnose the JS behavior: train one seed on cached artifacts, then print
//! reference / initial-policy / trained-policy cluster histograms.

use school_cli::config::EngineConfig;
use school_cli::pipeline;
use school_learn::metrics::{cluster_histogram, js_divergence};

fn main() {
    let text = std::fs::read_to_string("/tmp/cal_cache/smoke.toml").unwrap();
    let mut cfg = EngineConfig::from_str(&text).unwrap();
    cfg.seed = std::env::var("CAL_SEED").map(|s| s.parse().unwrap()).unwrap_or(1);
    cfg.apply_threads();

    let cache = std::path::PathBuf::from("/tmp/cal_cache");
    let ref_dir = cache.join("ref");
    let mvae_ckpt = cache.join("mvae.ckpt");
    let clusters = cache.join("clusters.json");

    let mut trainer = pipeline::restore_trainer(&cfg, &mvae_ckpt, &clusters, &ref_dir, None).unwrap();
    let init_policy = trainer.policy.clone();

    let ref_hist = cluster_histogram(&trainer.eval_model, &trainer.reference_latents);
    println!("[diag] weights:   {:?}", trainer.eval_model.weights);
    println!("[diag] ref hist:  {ref_hist:?}");

    let init_big = trainer.evaluate_rollout(&init_policy, 2000, 777).unwrap();
    println!(
        "[diag] init hist: {:?} (js {:.4})",
        cluster_histogram(&trainer.eval_model, &init_big.latents),
        js_divergence(&init_big.latents, &trainer.reference_latents, &trainer.eval_model).unwrap()
    );

    let mut js_trace = Vec::new();
    while !trainer.finished() {
        let log = trainer.iterate().unwrap();
        js_trace.push(log.js_to_reference);
    }
    println!("[diag] training js trace (every 5): {:?}", js_trace.iter().step_by(5).map(|v| (v * 1000.0).round() / 1000.0).collect::<Vec<_>>());

    let final_big = trainer.evaluate_rollout(&trainer.policy, 2000, 777).unwrap();
    println!(
        "[diag] trained hist: {:?} (js {:.4})",
        cluster_histogram(&trainer.eval_model, &final_big.latents),
        js_divergence(&final_big.latents, &trainer.reference_latents, &trainer.eval_model).unwrap()
    );
    let last5 = &js_trace[js_trace.len() - 5..];
    println!(
        "[diag] js: iter0 {:.4}, mean-last5 {:.4}, eval-200 {:.4}",
        js_trace[0],
        last5.iter().sum::<f64>() / 5.0,
        js_divergence(&final_big.latents, &trainer.reference_latents, &trainer.eval_model).unwrap()
    );
}
