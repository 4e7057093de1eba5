use school_cli::config::EngineConfig;
use school_cli::pipeline;
use std::time::Instant;

fn main() {
    let text = std::fs::read_to_string("/tmp/d48.toml").unwrap();
    let cfg = EngineConfig::from_str(&text).unwrap();
    cfg.apply_threads();
    let cache = std::path::PathBuf::from("/tmp/cal_cache");
    let t = Instant::now();
    let tm = pipeline::cmd_train_mvae(
        &cfg,
        &[&cache.join("ref"), &cache.join("rnd")],
        &cache.join("mvae48.ckpt"),
        None,
    )
    .unwrap();
    println!("[d48] mvae: recon {:.5} -> {:.5} in {:.0}s", tm.first.recon, tm.last.recon, t.elapsed().as_secs_f64());
    let model = pipeline::cmd_build_clusters(
        &cfg,
        &cache.join("mvae48.ckpt"),
        &cache.join("ref"),
        &cache.join("clusters48.json"),
        None,
    )
    .unwrap();
    println!("[d48] clusters: K={} weights {:?}", model.k, model.weights);
}
