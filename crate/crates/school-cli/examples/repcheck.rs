//! How discriminative is the cached latent representation? Compare the
//! random-action archive against the circling reference.

use school_cli::checkpoint::{Checkpoint, Stage};
use school_cli::pipeline;
use school_learn::metrics::{cluster_histogram, fid, js_divergence};
use school_learn::mvae::encode_stream;

fn main() {
    let cache = std::path::PathBuf::from("/tmp/cal_cache");
    let mvae =
        pipeline::mvae_from_checkpoint(&Checkpoint::read_from(&cache.join("mvae.ckpt"), Stage::Mvae).unwrap())
            .unwrap();
    let model = pipeline::load_cluster_model(&cache.join("clusters.json")).unwrap();
    let (ref_clips, _) = school_cli::archive::read_clip_archive(&cache.join("ref")).unwrap();
    let (rnd_clips, _) = school_cli::archive::read_clip_archive(&cache.join("rnd")).unwrap();
    let ref_z = encode_stream(&mvae, &ref_clips).unwrap();
    let rnd_z = encode_stream(&mvae, &rnd_clips).unwrap();

    println!("[rep] ref hist: {:?}", cluster_histogram(&model, &ref_z));
    println!("[rep] rnd hist: {:?}", cluster_histogram(&model, &rnd_z));
    println!("[rep] js(rnd, ref)  = {:.4}", js_divergence(&rnd_z, &ref_z, &model).unwrap());
    println!("[rep] fid(rnd, ref) = {:.4}", fid(&rnd_z, &ref_z).unwrap());
    // ref split halves as a sanity floor
    let (a, b) = ref_z.split_at(ref_z.len() / 2);
    println!("[rep] js(ref_a, ref_b) = {:.4}", js_divergence(a, b, &model).unwrap());
    println!("[rep] fid(ref_a, ref_b) = {:.4}", fid(a, b).unwrap());

    // latent geometry: mean pairwise distances within/between sets
    let dist = |x: &[Vec<f64>], y: &[Vec<f64>]| -> f64 {
        let mut s = 0.0;
        let mut n = 0.0;
        for (i, a) in x.iter().enumerate() {
            for (j, b) in y.iter().enumerate() {
                if !(std::ptr::eq(x, y) && i == j) {
                    s += a.iter().zip(b).map(|(&p, &q)| (p - q) * (p - q)).sum::<f64>().sqrt();
                    n += 1.0;
                }
            }
        }
        s / n
    };
    println!("[rep] mean dist ref-ref {:.3}, rnd-rnd {:.3}, ref-rnd {:.3}",
        dist(&ref_z, &ref_z), dist(&rnd_z, &rnd_z), dist(&ref_z, &rnd_z));
}
