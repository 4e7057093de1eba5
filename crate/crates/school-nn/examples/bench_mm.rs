use school_nn::mat::{Mat, set_thread_limit};
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use std::time::Instant;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for &(m, k, n) in &[(160usize, 64usize, 64usize), (1000, 67, 128), (1000, 128, 128), (640, 128, 128)] {
        let a = Mat::randn(m, k, 1.0, &mut rng);
        let b = Mat::randn(k, n, 1.0, &mut rng);
        for threads in [1usize, 0] {
            set_thread_limit(threads);
            let t0 = Instant::now();
            let mut iters = 0;
            let mut sink = 0.0;
            while t0.elapsed().as_secs_f64() < 1.0 {
                let c = a.matmul(&b);
                sink += c.data[0];
                iters += 1;
            }
            let secs = t0.elapsed().as_secs_f64();
            let gflops = (2.0 * m as f64 * k as f64 * n as f64 * iters as f64) / secs / 1e9;
            println!("{}x{}x{} threads={}: {:.2} GF/s ({} iters, sink {:.2})", m, k, n, threads, gflops, iters, sink);
        }
    }
}
