//! Dense layers, normalization and activations with explicit backward passes.
//!
//! Forward passes return the cache their backward needs; gradients are
//! accumulated into a mirror struct of the same shape.

use crate::mat::Mat;
use crate::param::ParamStruct;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: Mat, // [in, out]
    pub b: Mat, // [1, out]
}

impl Linear {
    pub fn new(input: usize, output: usize, rng: &mut ChaCha8Rng) -> Self {
        // He-style scaling keeps activations near unit variance at init
        let std = (2.0 / input as f64).sqrt();
        Linear { w: Mat::randn(input, output, std, rng), b: Mat::zeros(1, output) }
    }

    pub fn zeros_like(&self) -> Self {
        Linear { w: Mat::zeros(self.w.rows, self.w.cols), b: Mat::zeros(1, self.b.cols) }
    }

    pub fn forward(&self, x: &Mat) -> Mat {
        let mut y = x.matmul(&self.w);
        y.add_row_inplace(&self.b);
        y
    }

    /// Returns dx; accumulates dW and db into `grad`.
    pub fn backward(&self, x: &Mat, dy: &Mat, grad: &mut Linear) -> Mat {
        grad.w.add_inplace(&x.matmul_tn(dy));
        grad.b.add_inplace(&dy.col_sum());
        dy.matmul_nt(&self.w)
    }
}

impl ParamStruct for Linear {
    fn tensors(&self) -> Vec<(String, &Mat)> {
        vec![("w".into(), &self.w), ("b".into(), &self.b)]
    }
    fn tensors_mut(&mut self) -> Vec<(String, &mut Mat)> {
        vec![("w".into(), &mut self.w), ("b".into(), &mut self.b)]
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: Mat, // [1, d]
    pub beta: Mat,  // [1, d]
    pub eps: f64,
}

pub struct LayerNormCache {
    xhat: Mat,
    inv_std: Vec<f64>,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        LayerNorm { gamma: Mat::from_vec(1, dim, vec![1.0; dim]), beta: Mat::zeros(1, dim), eps: 1e-5 }
    }

    pub fn zeros_like(&self) -> Self {
        LayerNorm { gamma: Mat::zeros(1, self.gamma.cols), beta: Mat::zeros(1, self.beta.cols), eps: self.eps }
    }

    pub fn forward(&self, x: &Mat) -> (Mat, LayerNormCache) {
        let d = x.cols;
        let mut y = Mat::zeros(x.rows, d);
        let mut xhat = Mat::zeros(x.rows, d);
        let mut inv_std = Vec::with_capacity(x.rows);
        for i in 0..x.rows {
            let row = x.row(i);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let istd = 1.0 / (var + self.eps).sqrt();
            inv_std.push(istd);
            for j in 0..d {
                let xh = (row[j] - mean) * istd;
                xhat.set(i, j, xh);
                y.set(i, j, xh * self.gamma.data[j] + self.beta.data[j]);
            }
        }
        (y, LayerNormCache { xhat, inv_std })
    }

    pub fn backward(&self, cache: &LayerNormCache, dy: &Mat, grad: &mut LayerNorm) -> Mat {
        let d = dy.cols;
        let mut dx = Mat::zeros(dy.rows, d);
        for i in 0..dy.rows {
            let dyr = dy.row(i);
            let xh = cache.xhat.row(i);
            let istd = cache.inv_std[i];
            let mut sum_dxhat = 0.0;
            let mut sum_dxhat_xhat = 0.0;
            for j in 0..d {
                let dxhat = dyr[j] * self.gamma.data[j];
                sum_dxhat += dxhat;
                sum_dxhat_xhat += dxhat * xh[j];
                grad.gamma.data[j] += dyr[j] * xh[j];
                grad.beta.data[j] += dyr[j];
            }
            let n = d as f64;
            for j in 0..d {
                let dxhat = dyr[j] * self.gamma.data[j];
                dx.set(i, j, istd * (dxhat - sum_dxhat / n - xh[j] * sum_dxhat_xhat / n));
            }
        }
        dx
    }
}

impl ParamStruct for LayerNorm {
    fn tensors(&self) -> Vec<(String, &Mat)> {
        vec![("gamma".into(), &self.gamma), ("beta".into(), &self.beta)]
    }
    fn tensors_mut(&mut self) -> Vec<(String, &mut Mat)> {
        vec![("gamma".into(), &mut self.gamma), ("beta".into(), &mut self.beta)]
    }
}

pub fn tanh_forward(x: &Mat) -> Mat {
    x.map(f64::tanh)
}

/// dx from dy and the forward output y = tanh(x).
pub fn tanh_backward(y: &Mat, dy: &Mat) -> Mat {
    Mat {
        rows: y.rows,
        cols: y.cols,
        data: y.data.iter().zip(&dy.data).map(|(&yv, &d)| d * (1.0 - yv * yv)).collect(),
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

pub fn gelu_forward(x: &Mat) -> Mat {
    x.map(|v| 0.5 * v * (1.0 + (GELU_C * (v + GELU_A * v * v * v)).tanh()))
}

/// dx from dy and the forward *input* x.
pub fn gelu_backward(x: &Mat, dy: &Mat) -> Mat {
    Mat {
        rows: x.rows,
        cols: x.cols,
        data: x
            .data
            .iter()
            .zip(&dy.data)
            .map(|(&v, &d)| {
                let u = GELU_C * (v + GELU_A * v * v * v);
                let t = u.tanh();
                let du = GELU_C * (1.0 + 3.0 * GELU_A * v * v);
                d * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du)
            })
            .collect(),
    }
}

pub fn sigmoid_forward(x: &Mat) -> Mat {
    x.map(|v| 1.0 / (1.0 + (-v).exp()))
}

/// dx from dy and the forward output s = sigmoid(x).
pub fn sigmoid_backward(s: &Mat, dy: &Mat) -> Mat {
    Mat {
        rows: s.rows,
        cols: s.cols,
        data: s.data.iter().zip(&dy.data).map(|(&sv, &d)| d * sv * (1.0 - sv)).collect(),
    }
}

/// Plain multi-layer perceptron with a choice of hidden activation.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

pub struct MlpCache {
    /// Input and every post-activation (length layers+1; last entry is the
    /// pre-activation output of the final layer's input, see forward).
    inputs: Vec<Mat>,
    activations: Vec<Mat>, // tanh outputs per hidden layer
}

impl Mlp {
    /// `dims` = [input, hidden..., output]; hidden layers use tanh, the output
    /// layer is linear.
    pub fn new(dims: &[usize], rng: &mut ChaCha8Rng) -> Self {
        assert!(dims.len() >= 2);
        let layers = dims.windows(2).map(|w| Linear::new(w[0], w[1], rng)).collect();
        Mlp { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Mlp { layers: self.layers.iter().map(Linear::zeros_like).collect() }
    }

    pub fn forward(&self, x: &Mat) -> (Mat, MlpCache) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut activations = Vec::with_capacity(self.layers.len().saturating_sub(1));
        let mut h = x.clone();
        for (li, layer) in self.layers.iter().enumerate() {
            inputs.push(h.clone());
            let z = layer.forward(&h);
            if li + 1 < self.layers.len() {
                let a = tanh_forward(&z);
                activations.push(a.clone());
                h = a;
            } else {
                h = z;
            }
        }
        (h, MlpCache { inputs, activations })
    }

    pub fn backward(&self, cache: &MlpCache, dout: &Mat, grad: &mut Mlp) -> Mat {
        let mut d = dout.clone();
        for li in (0..self.layers.len()).rev() {
            if li + 1 < self.layers.len() {
                d = tanh_backward(&cache.activations[li], &d);
            }
            d = self.layers[li].backward(&cache.inputs[li], &d, &mut grad.layers[li]);
        }
        d
    }
}

impl ParamStruct for Mlp {
    fn tensors(&self) -> Vec<(String, &Mat)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                vec![(format!("l{i}.w"), &l.w), (format!("l{i}.b"), &l.b)]
            })
            .collect()
    }
    fn tensors_mut(&mut self) -> Vec<(String, &mut Mat)> {
        self.layers
            .iter_mut()
            .enumerate()
            .flat_map(|(i, l)| {
                vec![(format!("l{i}.w"), &mut l.w), (format!("l{i}.b"), &mut l.b)]
            })
            .collect()
    }
}
