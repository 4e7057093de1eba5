//! Multi-head self-attention and the pre-norm transformer block.

use crate::layers::{gelu_backward, gelu_forward, LayerNorm, LayerNormCache, Linear};
use crate::mat::Mat;
use crate::param::ParamStruct;
use rand_chacha::ChaCha8Rng;

fn take_cols(x: &Mat, start: usize, width: usize) -> Mat {
    let mut out = Mat::zeros(x.rows, width);
    for i in 0..x.rows {
        out.row_mut(i).copy_from_slice(&x.row(i)[start..start + width]);
    }
    out
}

fn add_cols(dst: &mut Mat, start: usize, src: &Mat) {
    for i in 0..dst.rows {
        let row = dst.row_mut(i);
        for (j, &v) in src.row(i).iter().enumerate() {
            row[start + j] += v;
        }
    }
}

fn softmax_rows(x: &mut Mat) {
    for i in 0..x.rows {
        let row = x.row_mut(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

/// dS for y = softmax(s) rows: dS = y .* (dY - rowdot(dY, y)).
fn softmax_backward(y: &Mat, dy: &Mat) -> Mat {
    let mut ds = Mat::zeros(y.rows, y.cols);
    for i in 0..y.rows {
        let yr = y.row(i);
        let dyr = dy.row(i);
        let dot: f64 = yr.iter().zip(dyr).map(|(&a, &b)| a * b).sum();
        for j in 0..y.cols {
            ds.set(i, j, yr[j] * (dyr[j] - dot));
        }
    }
    ds
}

#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub heads: usize,
}

pub struct MhaCache {
    x: Mat,
    q: Mat,
    k: Mat,
    v: Mat,
    attn: Vec<Mat>,
    concat: Mat,
}

impl MultiHeadAttention {
    pub fn new(dim: usize, heads: usize, rng: &mut ChaCha8Rng) -> Self {
        assert_eq!(dim % heads, 0, "dim must divide into heads");
        MultiHeadAttention {
            wq: Linear::new(dim, dim, rng),
            wk: Linear::new(dim, dim, rng),
            wv: Linear::new(dim, dim, rng),
            wo: Linear::new(dim, dim, rng),
            heads,
        }
    }

    pub fn zeros_like(&self) -> Self {
        MultiHeadAttention {
            wq: self.wq.zeros_like(),
            wk: self.wk.zeros_like(),
            wv: self.wv.zeros_like(),
            wo: self.wo.zeros_like(),
            heads: self.heads,
        }
    }

    pub fn forward(&self, x: &Mat) -> (Mat, MhaCache) {
        let d = x.cols;
        let hd = d / self.heads;
        let scale = 1.0 / (hd as f64).sqrt();
        let q = self.wq.forward(x);
        let k = self.wk.forward(x);
        let v = self.wv.forward(x);
        let mut concat = Mat::zeros(x.rows, d);
        let mut attn_cache = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = take_cols(&q, h * hd, hd);
            let kh = take_cols(&k, h * hd, hd);
            let vh = take_cols(&v, h * hd, hd);
            let mut scores = qh.matmul_nt(&kh);
            scores.scale_inplace(scale);
            softmax_rows(&mut scores);
            let oh = scores.matmul(&vh);
            add_cols(&mut concat, h * hd, &oh);
            attn_cache.push(scores);
        }
        let y = self.wo.forward(&concat);
        (y, MhaCache { x: x.clone(), q, k, v, attn: attn_cache, concat })
    }

    pub fn backward(&self, cache: &MhaCache, dy: &Mat, grad: &mut MultiHeadAttention) -> Mat {
        let d = cache.x.cols;
        let hd = d / self.heads;
        let scale = 1.0 / (hd as f64).sqrt();

        let dconcat = self.wo.backward(&cache.concat, dy, &mut grad.wo);

        let mut dq = Mat::zeros(cache.q.rows, d);
        let mut dk = Mat::zeros(cache.k.rows, d);
        let mut dv = Mat::zeros(cache.v.rows, d);
        for h in 0..self.heads {
            let doh = take_cols(&dconcat, h * hd, hd);
            let qh = take_cols(&cache.q, h * hd, hd);
            let kh = take_cols(&cache.k, h * hd, hd);
            let vh = take_cols(&cache.v, h * hd, hd);
            let attn = &cache.attn[h];

            let dattn = doh.matmul_nt(&vh);
            let dvh = attn.matmul_tn(&doh);
            let mut dscores = softmax_backward(attn, &dattn);
            dscores.scale_inplace(scale);
            let dqh = dscores.matmul(&kh);
            let dkh = dscores.matmul_tn(&qh);

            add_cols(&mut dq, h * hd, &dqh);
            add_cols(&mut dk, h * hd, &dkh);
            add_cols(&mut dv, h * hd, &dvh);
        }

        let mut dx = self.wq.backward(&cache.x, &dq, &mut grad.wq);
        dx.add_inplace(&self.wk.backward(&cache.x, &dk, &mut grad.wk));
        dx.add_inplace(&self.wv.backward(&cache.x, &dv, &mut grad.wv));
        dx
    }
}

impl ParamStruct for MultiHeadAttention {
    fn tensors(&self) -> Vec<(String, &Mat)> {
        let mut out = Vec::new();
        for (n, l) in [("wq", &self.wq), ("wk", &self.wk), ("wv", &self.wv), ("wo", &self.wo)] {
            out.push((format!("{n}.w"), &l.w));
            out.push((format!("{n}.b"), &l.b));
        }
        out
    }
    fn tensors_mut(&mut self) -> Vec<(String, &mut Mat)> {
        let mut out: Vec<(String, &mut Mat)> = Vec::new();
        for (n, l) in [
            ("wq", &mut self.wq),
            ("wk", &mut self.wk),
            ("wv", &mut self.wv),
            ("wo", &mut self.wo),
        ] {
            out.push((format!("{n}.w"), &mut l.w));
            out.push((format!("{n}.b"), &mut l.b));
        }
        out
    }
}

/// Pre-norm transformer block: x + MHA(LN(x)), then h + MLP(LN(h)).
#[derive(Debug, Clone)]
pub struct TransformerBlock {
    pub ln1: LayerNorm,
    pub attn: MultiHeadAttention,
    pub ln2: LayerNorm,
    pub fc1: Linear,
    pub fc2: Linear,
}

pub struct BlockCache {
    c1: LayerNormCache,
    ca: MhaCache,
    c2: LayerNormCache,
    n2: Mat,
    m1: Mat,
    g: Mat,
}

impl TransformerBlock {
    pub fn new(dim: usize, heads: usize, mlp_hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        TransformerBlock {
            ln1: LayerNorm::new(dim),
            attn: MultiHeadAttention::new(dim, heads, rng),
            ln2: LayerNorm::new(dim),
            fc1: Linear::new(dim, mlp_hidden, rng),
            fc2: Linear::new(mlp_hidden, dim, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        TransformerBlock {
            ln1: self.ln1.zeros_like(),
            attn: self.attn.zeros_like(),
            ln2: self.ln2.zeros_like(),
            fc1: self.fc1.zeros_like(),
            fc2: self.fc2.zeros_like(),
        }
    }

    pub fn forward(&self, x: &Mat) -> (Mat, BlockCache) {
        let (n1, c1) = self.ln1.forward(x);
        let (a, ca) = self.attn.forward(&n1);
        let mut h = x.clone();
        h.add_inplace(&a);
        let (n2, c2) = self.ln2.forward(&h);
        let m1 = self.fc1.forward(&n2);
        let g = gelu_forward(&m1);
        let m2 = self.fc2.forward(&g);
        let mut y = h;
        y.add_inplace(&m2);
        (y, BlockCache { c1, ca, c2, n2, m1, g })
    }

    pub fn backward(&self, cache: &BlockCache, dy: &Mat, grad: &mut TransformerBlock) -> Mat {
        let dg = self.fc2.backward(&cache.g, dy, &mut grad.fc2);
        let dm1 = gelu_backward(&cache.m1, &dg);
        let dn2 = self.fc1.backward(&cache.n2, &dm1, &mut grad.fc1);
        let mut dh = dy.clone();
        dh.add_inplace(&self.ln2.backward(&cache.c2, &dn2, &mut grad.ln2));

        let dn1 = self.attn.backward(&cache.ca, &dh, &mut grad.attn);
        let mut dx = dh.clone();
        dx.add_inplace(&self.ln1.backward(&cache.c1, &dn1, &mut grad.ln1));
        dx
    }
}

impl ParamStruct for TransformerBlock {
    fn tensors(&self) -> Vec<(String, &Mat)> {
        let mut out: Vec<(String, &Mat)> = Vec::new();
        for (n, m) in self.ln1.tensors() {
            out.push((format!("ln1.{n}"), m));
        }
        for (n, m) in self.attn.tensors() {
            out.push((format!("attn.{n}"), m));
        }
        for (n, m) in self.ln2.tensors() {
            out.push((format!("ln2.{n}"), m));
        }
        out.push(("fc1.w".into(), &self.fc1.w));
        out.push(("fc1.b".into(), &self.fc1.b));
        out.push(("fc2.w".into(), &self.fc2.w));
        out.push(("fc2.b".into(), &self.fc2.b));
        out
    }
    fn tensors_mut(&mut self) -> Vec<(String, &mut Mat)> {
        let mut out: Vec<(String, &mut Mat)> = Vec::new();
        for (n, m) in self.ln1.tensors_mut() {
            out.push((format!("ln1.{n}"), m));
        }
        for (n, m) in self.attn.tensors_mut() {
            out.push((format!("attn.{n}"), m));
        }
        for (n, m) in self.ln2.tensors_mut() {
            out.push((format!("ln2.{n}"), m));
        }
        out.push(("fc1.w".into(), &mut self.fc1.w));
        out.push(("fc1.b".into(), &mut self.fc1.b));
        out.push(("fc2.w".into(), &mut self.fc2.w));
        out.push(("fc2.b".into(), &mut self.fc2.b));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::check_grads;
    use rand::SeedableRng;

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut x = Mat::randn(5, 7, 3.0, &mut rng);
        softmax_rows(&mut x);
        for i in 0..5 {
            let s: f64 = x.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mha_gradcheck() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut mha = MultiHeadAttention::new(8, 2, &mut rng);
        let x = Mat::randn(5, 8, 1.0, &mut rng);
        let target = Mat::randn(5, 8, 1.0, &mut rng);

        let loss = |p: &MultiHeadAttention| {
            let (y, _) = p.forward(&x);
            y.data.iter().zip(&target.data).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        };

        let (y, cache) = mha.forward(&x);
        let mut dy = Mat::zeros(5, 8);
        for i in 0..dy.data.len() {
            dy.data[i] = 2.0 * (y.data[i] - target.data[i]);
        }
        let mut grad = mha.zeros_like();
        mha.backward(&cache, &dy, &mut grad);

        let report = check_grads(&mut mha, &grad, loss, 1e-5, 1e-4);
        assert!(report.failures.is_empty(), "worst failure {:?}", report.failures.first());
    }

    #[test]
    fn mha_input_gradient_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mha = MultiHeadAttention::new(8, 2, &mut rng);
        let mut x = Mat::randn(4, 8, 1.0, &mut rng);
        let target = Mat::randn(4, 8, 1.0, &mut rng);

        let (y, cache) = mha.forward(&x);
        let mut dy = Mat::zeros(4, 8);
        for i in 0..dy.data.len() {
            dy.data[i] = 2.0 * (y.data[i] - target.data[i]);
        }
        let mut grad = mha.zeros_like();
        let dx = mha.backward(&cache, &dy, &mut grad);

        let h = 1e-5;
        let mut worst = 0.0f64;
        for e in 0..x.data.len() {
            let old = x.data[e];
            x.data[e] = old + h;
            let (yp, _) = mha.forward(&x);
            let lp: f64 = yp.data.iter().zip(&target.data).map(|(a, b)| (a - b) * (a - b)).sum();
            x.data[e] = old - h;
            let (ym, _) = mha.forward(&x);
            let lm: f64 = ym.data.iter().zip(&target.data).map(|(a, b)| (a - b) * (a - b)).sum();
            x.data[e] = old;
            let fd = (lp - lm) / (2.0 * h);
            let rel = (dx.data[e] - fd).abs() / dx.data[e].abs().max(fd.abs()).max(1e-2);
            worst = worst.max(rel);
        }
        assert!(worst < 1e-4, "worst input-gradient relative error {worst}");
    }

    #[test]
    fn block_gradcheck() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut block = TransformerBlock::new(8, 2, 16, &mut rng);
        let x = Mat::randn(4, 8, 1.0, &mut rng);
        let target = Mat::randn(4, 8, 1.0, &mut rng);

        let loss = |p: &TransformerBlock| {
            let (y, _) = p.forward(&x);
            y.data.iter().zip(&target.data).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        };

        let (y, cache) = block.forward(&x);
        let mut dy = Mat::zeros(4, 8);
        for i in 0..dy.data.len() {
            dy.data[i] = 2.0 * (y.data[i] - target.data[i]);
        }
        let mut grad = block.zeros_like();
        block.backward(&cache, &dy, &mut grad);

        let report = check_grads(&mut block, &grad, loss, 1e-5, 1e-4);
        assert!(report.failures.is_empty(), "worst failure {:?}", report.failures.first());
    }
}
