//! Row-major f64 matrix with the handful of kernels the networks need.
//!
//! Every kernel computes each output element with a fixed sequential
//! accumulation order, so results are bit-identical no matter how many
//! threads are used; the thread count only affects wall time.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::sync::atomic::{AtomicUsize, Ordering};

static THREAD_LIMIT: AtomicUsize = AtomicUsize::new(0);

/// Limit kernel parallelism; 0 means "use rayon's default pool".
pub fn set_thread_limit(n: usize) {
    THREAD_LIMIT.store(n, Ordering::Relaxed);
}

pub fn thread_limit() -> usize {
    THREAD_LIMIT.load(Ordering::Relaxed)
}

fn run_parallel() -> bool {
    thread_limit() != 1
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Mat { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    pub fn randn(rows: usize, cols: usize, std: f64, rng: &mut ChaCha8Rng) -> Self {
        let data = (0..rows * cols)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                z * std
            })
            .collect();
        Mat { rows, cols, data }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn zero_fill(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// C = self * b.
    pub fn matmul(&self, b: &Mat) -> Mat {
        assert_eq!(self.cols, b.rows, "matmul shape {}x{} * {}x{}", self.rows, self.cols, b.rows, b.cols);
        let mut c = Mat::zeros(self.rows, b.cols);
        let inner = self.cols;
        let bc = b.cols;
        let body = |i: usize, crow: &mut [f64]| {
            let arow = &self.data[i * inner..(i + 1) * inner];
            for (k, &aik) in arow.iter().enumerate() {
                let brow = &b.data[k * bc..(k + 1) * bc];
                for (cv, &bv) in crow.iter_mut().zip(brow) {
                    *cv += aik * bv;
                }
            }
        };
        if run_parallel() && self.rows > 1 && (self.rows * inner * bc) > 2_000_000 {
            c.data
                .par_chunks_mut(bc)
                .enumerate()
                .for_each(|(i, crow)| body(i, crow));
        } else {
            for (i, crow) in c.data.chunks_mut(bc).enumerate() {
                body(i, crow);
            }
        }
        c
    }

    /// C = self * b^T.
    pub fn matmul_nt(&self, b: &Mat) -> Mat {
        assert_eq!(self.cols, b.cols, "matmul_nt shape mismatch");
        let mut c = Mat::zeros(self.rows, b.rows);
        let inner = self.cols;
        let body = |i: usize, crow: &mut [f64]| {
            let arow = &self.data[i * inner..(i + 1) * inner];
            for (j, cv) in crow.iter_mut().enumerate() {
                let brow = &b.data[j * inner..(j + 1) * inner];
                let mut acc = 0.0;
                for (&av, &bv) in arow.iter().zip(brow) {
                    acc += av * bv;
                }
                *cv = acc;
            }
        };
        if run_parallel() && self.rows > 1 && (self.rows * inner * b.rows) > 2_000_000 {
            c.data
                .par_chunks_mut(b.rows)
                .enumerate()
                .for_each(|(i, crow)| body(i, crow));
        } else {
            for (i, crow) in c.data.chunks_mut(b.rows).enumerate() {
                body(i, crow);
            }
        }
        c
    }

    /// C = self^T * b (the dW = x^T dy pattern).
    pub fn matmul_tn(&self, b: &Mat) -> Mat {
        assert_eq!(self.rows, b.rows, "matmul_tn shape mismatch");
        let mut c = Mat::zeros(self.cols, b.cols);
        let bc = b.cols;
        let n = self.rows;
        let ac = self.cols;
        let body = |a: usize, crow: &mut [f64]| {
            for i in 0..n {
                let av = self.data[i * ac + a];
                if av != 0.0 {
                    let brow = &b.data[i * bc..(i + 1) * bc];
                    for (cv, &bv) in crow.iter_mut().zip(brow) {
                        *cv += av * bv;
                    }
                }
            }
        };
        if run_parallel() && ac > 1 && (n * ac * bc) > 2_000_000 {
            c.data
                .par_chunks_mut(bc)
                .enumerate()
                .for_each(|(a, crow)| body(a, crow));
        } else {
            for (a, crow) in c.data.chunks_mut(bc).enumerate() {
                body(a, crow);
            }
        }
        c
    }

    /// Add a 1-row bias to every row.
    pub fn add_row_inplace(&mut self, bias: &Mat) {
        assert_eq!(bias.rows, 1);
        assert_eq!(bias.cols, self.cols);
        for i in 0..self.rows {
            let row = &mut self.data[i * self.cols..(i + 1) * self.cols];
            for (v, &b) in row.iter_mut().zip(&bias.data) {
                *v += b;
            }
        }
    }

    /// Column sums as a 1-row matrix.
    pub fn col_sum(&self) -> Mat {
        let mut out = Mat::zeros(1, self.cols);
        for i in 0..self.rows {
            let row = self.row(i);
            for (o, &v) in out.data.iter_mut().zip(row) {
                *o += v;
            }
        }
        out
    }

    /// Mean over rows as a 1-row matrix.
    pub fn row_mean(&self) -> Mat {
        let mut out = self.col_sum();
        let n = self.rows as f64;
        out.data.iter_mut().for_each(|v| *v /= n);
        out
    }

    pub fn add_inplace(&mut self, o: &Mat) {
        assert_eq!(self.rows, o.rows);
        assert_eq!(self.cols, o.cols);
        for (a, &b) in self.data.iter_mut().zip(&o.data) {
            *a += b;
        }
    }

    pub fn scale_inplace(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn hadamard(&self, o: &Mat) -> Mat {
        assert_eq!(self.rows, o.rows);
        assert_eq!(self.cols, o.cols);
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&o.data).map(|(&a, &b)| a * b).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn naive_matmul(a: &Mat, b: &Mat) -> Mat {
        let mut c = Mat::zeros(a.rows, b.cols);
        for i in 0..a.rows {
            for j in 0..b.cols {
                let mut s = 0.0;
                for k in 0..a.cols {
                    s += a.get(i, k) * b.get(k, j);
                }
                c.set(i, j, s);
            }
        }
        c
    }

    #[test]
    fn matmul_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for (m, k, n) in [(1, 1, 1), (3, 4, 5), (17, 9, 13), (32, 64, 8)] {
            let a = Mat::randn(m, k, 1.0, &mut rng);
            let b = Mat::randn(k, n, 1.0, &mut rng);
            let c = a.matmul(&b);
            let d = naive_matmul(&a, &b);
            for (x, y) in c.data.iter().zip(&d.data) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transposed_variants_match_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = Mat::randn(7, 5, 1.0, &mut rng);
        let b = Mat::randn(9, 5, 1.0, &mut rng);
        let c = a.matmul_nt(&b); // 7x9
        for i in 0..7 {
            for j in 0..9 {
                let mut s = 0.0;
                for k in 0..5 {
                    s += a.get(i, k) * b.get(j, k);
                }
                assert!((c.get(i, j) - s).abs() < 1e-12);
            }
        }

        let x = Mat::randn(6, 4, 1.0, &mut rng);
        let y = Mat::randn(6, 3, 1.0, &mut rng);
        let z = x.matmul_tn(&y); // 4x3
        for i in 0..4 {
            for j in 0..3 {
                let mut s = 0.0;
                for k in 0..6 {
                    s += x.get(k, i) * y.get(k, j);
                }
                assert!((z.get(i, j) - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn parallel_and_sequential_bitwise_equal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = Mat::randn(64, 128, 1.0, &mut rng);
        let b = Mat::randn(128, 96, 1.0, &mut rng);
        set_thread_limit(1);
        let seq = a.matmul(&b);
        set_thread_limit(0);
        let par = a.matmul(&b);
        assert_eq!(seq.data, par.data);
    }
}
