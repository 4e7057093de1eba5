//! Adaptive-moment gradient descent over a `ParamStruct`.

use crate::param::ParamStruct;

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One update step; `grads` holds dL/dp in the same traversal order.
    pub fn step<P: ParamStruct>(&mut self, params: &mut P, grads: &P) {
        self.t += 1;
        let gs = grads.tensors();
        let ps = params.tensors_mut();
        assert_eq!(gs.len(), ps.len(), "parameter/gradient structure mismatch");
        if self.m.is_empty() {
            self.m = gs.iter().map(|(_, g)| vec![0.0; g.data.len()]).collect();
            self.v = gs.iter().map(|(_, g)| vec![0.0; g.data.len()]).collect();
        }
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (ti, ((_, p), (_, g))) in ps.into_iter().zip(gs).enumerate() {
            let m = &mut self.m[ti];
            let v = &mut self.v[ti];
            for e in 0..p.data.len() {
                let grad = g.data[e];
                m[e] = self.beta1 * m[e] + (1.0 - self.beta1) * grad;
                v[e] = self.beta2 * v[e] + (1.0 - self.beta2) * grad * grad;
                let mhat = m[e] / bc1;
                let vhat = v[e] / bc2;
                p.data[e] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }

    /// Serialize optimizer state as flat (m, v, t) for checkpointing.
    pub fn export_state(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, u64) {
        (self.m.clone(), self.v.clone(), self.t)
    }

    pub fn import_state(&mut self, m: Vec<Vec<f64>>, v: Vec<Vec<f64>>, t: u64) {
        self.m = m;
        self.v = v;
        self.t = t;
    }
}
