//! Adversarial discriminator over latent transitions (z, z'), trained with a
//! gradient penalty on reference samples, plus the cluster-weighted style
//! reward consumed by the policy trainer.
//!
//! The gradient penalty needs d/dtheta of ||d score / d input||^2, so the
//! backward pass is differentiated once more by hand (double backprop); both
//! orders are covered by finite-difference tests.

use crate::cluster::{ClusterModel, assign_cluster};
use crate::mvae::Latent;
use rand_chacha::ChaCha8Rng;
use school_nn::{Adam, Linear, Mat, ParamStruct};
use serde::{Deserialize, Serialize};

pub const PROB_CLAMP: f64 = 1e-4;
pub const LOG_ARG_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSource {
    Reference,
    Policy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionPair {
    pub z: Latent,
    pub z_next: Latent,
    pub source: PairSource,
}

impl TransitionPair {
    pub fn features(&self) -> Vec<f64> {
        let mut f = Vec::with_capacity(self.z.len() + self.z_next.len());
        f.extend_from_slice(&self.z);
        f.extend_from_slice(&self.z_next);
        f
    }
}

/// Fully connected scorer; hidden layers use tanh, the output is squashed to
/// [-1, 1] unless `squash` is disabled (a hook for analytic tests).
#[derive(Debug, Clone)]
pub struct Discriminator {
    pub layers: Vec<Linear>,
    pub squash: bool,
}

impl Discriminator {
    /// `dims` = [input, hidden..., 1]; the default stack is [2J, 128, 32, 1].
    pub fn new(dims: &[usize], squash: bool, rng: &mut ChaCha8Rng) -> Self {
        assert!(dims.len() >= 2);
        assert_eq!(*dims.last().unwrap(), 1, "scalar score output");
        Discriminator {
            layers: dims.windows(2).map(|w| Linear::new(w[0], w[1], rng)).collect(),
            squash,
        }
    }

    pub fn default_dims(latent: usize) -> Vec<usize> {
        vec![2 * latent, 128, 32, 1]
    }

    pub fn zeros_like(&self) -> Self {
        Discriminator { layers: self.layers.iter().map(Linear::zeros_like).collect(), squash: self.squash }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.rows
    }

    fn forward_trace(&self, x: &Mat) -> DiscTrace {
        let mut zs = Vec::with_capacity(self.layers.len());
        let mut activations = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(&h);
            zs.push(z.clone());
            let a = if li < last || self.squash { z.map(f64::tanh) } else { z };
            activations.push(a.clone());
            h = a;
        }
        DiscTrace { input: x.clone(), zs, activations }
    }

    /// Scores for a batch of feature rows, each in [-1, 1] when squashed.
    pub fn score_batch(&self, x: &Mat) -> Mat {
        self.forward_trace(x).score()
    }

    pub fn score_pair(&self, pair: &TransitionPair) -> f64 {
        let f = pair.features();
        let x = Mat::from_vec(1, f.len(), f);
        self.score_batch(&x).data[0]
    }

    /// Per-row gradient of the score with respect to the input features.
    pub fn input_gradients(&self, x: &Mat) -> Mat {
        let trace = self.forward_trace(x);
        let deltas = trace.input_deltas(self);
        deltas[0].matmul_nt(&self.layers[0].w)
    }

    /// Mean squared L2 norm of the per-sample input gradient.
    pub fn gradient_penalty(&self, x: &Mat) -> f64 {
        assert!(x.rows > 0, "gradient penalty needs a non-empty batch");
        let g = self.input_gradients(x);
        g.data.iter().map(|&v| v * v).sum::<f64>() / x.rows as f64
    }

    /// Parameter gradient of `gradient_penalty`, scaled by `scale`, added
    /// into `grads` (double backprop through the input-gradient computation).
    pub fn gradient_penalty_backward(&self, x: &Mat, scale: f64, grads: &mut Discriminator) {
        let trace = self.forward_trace(x);
        let deltas = trace.input_deltas(self);
        let n_layers = self.layers.len();
        let batch = x.rows as f64;
        let gx = deltas[0].matmul_nt(&self.layers[0].w);

        // adjoint seed: P = mean ||gx||^2
        let mut gx_bar = gx.clone();
        gx_bar.scale_inplace(2.0 * scale / batch);

        // reverse of gx = delta_0 * W_0^T
        let mut delta_bars: Vec<Option<Mat>> = vec![None; n_layers];
        delta_bars[0] = Some(gx_bar.matmul(&self.layers[0].w));
        grads.layers[0].w.add_inplace(&gx_bar.matmul_tn(&deltas[0]));

        // activation adjoints accumulated while unwinding the delta chain
        let mut a_bars: Vec<Option<Mat>> = vec![None; n_layers];

        // reverse of delta_{l} = (delta_{l+1} W_{l+1}^T) .* s_l for l = 0..L-2,
        // processed in increasing l (reverse of the backward-chain order)
        for l in 0..n_layers - 1 {
            let delta_bar = delta_bars[l].take().expect("delta adjoint in order");
            let s_l = trace.activations[l].map(|a| 1.0 - a * a);
            let t = deltas[l + 1].matmul_nt(&self.layers[l + 1].w); // t_{l+1}
            // t_bar = delta_bar .* s_l
            let t_bar = delta_bar.hadamard(&s_l);
            // s_bar = delta_bar .* t ; a_bar += s_bar * (-2 a)
            let mut a_bar = delta_bar.hadamard(&t);
            for (ab, &a) in a_bar.data.iter_mut().zip(&trace.activations[l].data) {
                *ab *= -2.0 * a;
            }
            a_bars[l] = Some(a_bar);
            // through t_{l+1} = delta_{l+1} W_{l+1}^T
            delta_bars[l + 1] = Some(t_bar.matmul(&self.layers[l + 1].w));
            grads.layers[l + 1].w.add_inplace(&t_bar.matmul_tn(&deltas[l + 1]));
        }

        // seed of the backward chain: delta_{L-1} = s_{L-1} (tanh squash) or ones
        let last = n_layers - 1;
        if self.squash {
            let delta_bar = delta_bars[last].take().expect("final delta adjoint");
            let mut a_bar = delta_bar;
            for (ab, &a) in a_bar.data.iter_mut().zip(&trace.activations[last].data) {
                *ab *= -2.0 * a;
            }
            match &mut a_bars[last] {
                Some(existing) => existing.add_inplace(&a_bar),
                slot => *slot = Some(a_bar),
            }
        }

        // unwind the forward chain: a_l = tanh(z_l), z_l = a_{l-1} W_l + b_l
        let mut carry: Option<Mat> = None;
        for l in (0..n_layers).rev() {
            let mut a_bar = match (a_bars[l].take(), carry.take()) {
                (Some(mut a), Some(c)) => {
                    a.add_inplace(&c);
                    a
                }
                (Some(a), None) => a,
                (None, Some(c)) => c,
                (None, None) => continue,
            };
            // through the activation (skip when the last layer is unsquashed)
            let z_bar = if l < last || self.squash {
                let s = trace.activations[l].map(|a| 1.0 - a * a);
                a_bar = a_bar.hadamard(&s);
                a_bar
            } else {
                a_bar
            };
            let input = if l == 0 { &trace.input } else { &trace.activations[l - 1] };
            grads.layers[l].w.add_inplace(&input.matmul_tn(&z_bar));
            grads.layers[l].b.add_inplace(&z_bar.col_sum());
            if l > 0 {
                carry = Some(z_bar.matmul_nt(&self.layers[l].w));
            }
        }
    }

    /// Standard score backward: given d loss / d score per row, accumulate
    /// parameter gradients.
    fn score_backward(&self, trace: &DiscTrace, dscore: &Mat, grads: &mut Discriminator) {
        let last = self.layers.len() - 1;
        let mut d = dscore.clone();
        for l in (0..self.layers.len()).rev() {
            if l < last || self.squash {
                let s = trace.activations[l].map(|a| 1.0 - a * a);
                d = d.hadamard(&s);
            }
            let input = if l == 0 { &trace.input } else { &trace.activations[l - 1] };
            grads.layers[l].w.add_inplace(&input.matmul_tn(&d));
            grads.layers[l].b.add_inplace(&d.col_sum());
            if l > 0 {
                d = d.matmul_nt(&self.layers[l].w);
            }
        }
    }
}

struct DiscTrace {
    input: Mat,
    zs: Vec<Mat>,
    activations: Vec<Mat>,
}

impl DiscTrace {
    fn score(&self) -> Mat {
        self.activations.last().unwrap().clone()
    }

    /// delta_l = d score / d z_l for every layer, computed per row.
    fn input_deltas(&self, disc: &Discriminator) -> Vec<Mat> {
        let n_layers = disc.layers.len();
        let last = n_layers - 1;
        let rows = self.input.rows;
        let mut deltas: Vec<Mat> = vec![Mat::zeros(0, 0); n_layers];
        deltas[last] = if disc.squash {
            self.activations[last].map(|a| 1.0 - a * a)
        } else {
            Mat::from_vec(rows, 1, vec![1.0; rows])
        };
        for l in (0..last).rev() {
            let t = deltas[l + 1].matmul_nt(&disc.layers[l + 1].w);
            let s = self.activations[l].map(|a| 1.0 - a * a);
            deltas[l] = t.hadamard(&s);
        }
        let _ = &self.zs;
        deltas
    }
}

impl ParamStruct for Discriminator {
    fn tensors(&self) -> Vec<(String, &Mat)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| vec![(format!("l{i}.w"), &l.w), (format!("l{i}.b"), &l.b)])
            .collect()
    }
    fn tensors_mut(&mut self) -> Vec<(String, &mut Mat)> {
        self.layers
            .iter_mut()
            .enumerate()
            .flat_map(|(i, l)| vec![(format!("l{i}.w"), &mut l.w), (format!("l{i}.b"), &mut l.b)])
            .collect()
    }
}

pub fn batch_features(pairs: &[&TransitionPair]) -> Mat {
    assert!(!pairs.is_empty());
    let dim = pairs[0].z.len() + pairs[0].z_next.len();
    let mut x = Mat::zeros(pairs.len(), dim);
    for (i, p) in pairs.iter().enumerate() {
        x.row_mut(i).copy_from_slice(&p.features());
    }
    x
}

fn prob_from_score(score: f64) -> f64 {
    ((score + 1.0) * 0.5).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscLossParts {
    pub ref_term: f64,
    pub policy_term: f64,
    pub gp: f64,
    pub total: f64,
    pub mean_ref_score: f64,
    pub mean_policy_score: f64,
}

/// -E_ref[log p] - E_policy[log(1-p)] + w_gp * GP(ref), with p = (score+1)/2
/// clamped away from {0, 1}.
pub fn disc_loss(disc: &Discriminator, ref_x: &Mat, pol_x: &Mat, w_gp: f64) -> DiscLossParts {
    let s_ref = disc.score_batch(ref_x);
    let s_pol = disc.score_batch(pol_x);
    let ref_term = -s_ref.data.iter().map(|&s| prob_from_score(s).ln()).sum::<f64>()
        / s_ref.data.len() as f64;
    let policy_term = -s_pol.data.iter().map(|&s| (1.0 - prob_from_score(s)).ln()).sum::<f64>()
        / s_pol.data.len() as f64;
    let gp = disc.gradient_penalty(ref_x);
    DiscLossParts {
        ref_term,
        policy_term,
        gp,
        total: ref_term + policy_term + w_gp * gp,
        mean_ref_score: s_ref.data.iter().sum::<f64>() / s_ref.data.len() as f64,
        mean_policy_score: s_pol.data.iter().sum::<f64>() / s_pol.data.len() as f64,
    }
}

/// Parameter gradients of `disc_loss`.
pub fn disc_loss_grads(
    disc: &Discriminator,
    ref_x: &Mat,
    pol_x: &Mat,
    w_gp: f64,
    grads: &mut Discriminator,
) -> DiscLossParts {
    let parts = disc_loss(disc, ref_x, pol_x, w_gp);

    let ref_trace = disc.forward_trace(ref_x);
    let s_ref = ref_trace.score();
    let mut dref = Mat::zeros(s_ref.rows, 1);
    for i in 0..s_ref.rows {
        let p = (s_ref.data[i] + 1.0) * 0.5;
        // clamped probabilities pass no gradient
        dref.data[i] = if p <= PROB_CLAMP || p >= 1.0 - PROB_CLAMP {
            0.0
        } else {
            -0.5 / p / s_ref.rows as f64
        };
    }
    disc.score_backward(&ref_trace, &dref, grads);

    let pol_trace = disc.forward_trace(pol_x);
    let s_pol = pol_trace.score();
    let mut dpol = Mat::zeros(s_pol.rows, 1);
    for i in 0..s_pol.rows {
        let p = (s_pol.data[i] + 1.0) * 0.5;
        dpol.data[i] = if p <= PROB_CLAMP || p >= 1.0 - PROB_CLAMP {
            0.0
        } else {
            0.5 / (1.0 - p) / s_pol.rows as f64
        };
    }
    disc.score_backward(&pol_trace, &dpol, grads);

    if w_gp != 0.0 {
        disc.gradient_penalty_backward(ref_x, w_gp, grads);
    }
    parts
}

/// Cluster-weighted style reward in [0, 1].
pub fn style_reward(disc: &Discriminator, model: &ClusterModel, pair: &TransitionPair) -> f64 {
    let i = assign_cluster(model, &pair.z);
    style_reward_for_cluster(disc.score_pair(pair), model, i)
}

pub fn style_reward_for_cluster(score: f64, model: &ClusterModel, cluster: usize) -> f64 {
    let d_hat = (score + 1.0) * 0.5;
    let sum_w: f64 = model.weights.iter().sum();
    let arg = (1.0 - model.weights[cluster] * d_hat / sum_w).clamp(LOG_ARG_FLOOR, 1.0);
    let raw = -arg.ln();
    (2.0 / (1.0 + raw.exp())).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscUpdateConfig {
    pub lr: f64,
    pub w_gp: f64,
}

/// One optimizer step on the discriminator objective.
pub fn update_discriminator(
    disc: &mut Discriminator,
    opt: &mut Adam,
    ref_x: &Mat,
    pol_x: &Mat,
    w_gp: f64,
) -> DiscLossParts {
    let mut grads = disc.zeros_like();
    let parts = disc_loss_grads(disc, ref_x, pol_x, w_gp, &mut grads);
    opt.step(disc, &grads);
    parts
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use school_nn::check_grads;

    fn pair(z: Vec<f64>, zn: Vec<f64>, source: PairSource) -> TransitionPair {
        TransitionPair { z, z_next: zn, source }
    }

    fn random_x(rows: usize, cols: usize, seed: u64) -> Mat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Mat::randn(rows, cols, 1.0, &mut rng)
    }

    #[test]
    fn zero_weights_score_zero_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut d = Discriminator::new(&[8, 16, 1], true, &mut rng);
        for l in &mut d.layers {
            l.w.zero_fill();
            l.b.zero_fill();
        }
        let x = random_x(10, 8, 1);
        let s = d.score_batch(&x);
        assert!(s.data.iter().all(|&v| v == 0.0));

        let d2 = Discriminator::new(&[8, 16, 1], true, &mut rng);
        let x2 = random_x(1000, 8, 2);
        let s2 = d2.score_batch(&x2);
        assert!(s2.data.iter().all(|&v| (-1.0..=1.0).contains(&v)));

        // identical inputs give identical scores
        let p = pair(vec![0.3; 4], vec![-0.1; 4], PairSource::Policy);
        assert_eq!(d2.score_pair(&p), d2.score_pair(&p));
    }

    #[test]
    fn gradient_penalty_linear_oracle() {
        // unsquashed single layer: score = w . x + b, so GP = ||w||^2 exactly
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = Discriminator::new(&[6, 1], false, &mut rng);
        let x = random_x(7, 6, 4);
        let expect: f64 = d.layers[0].w.data.iter().map(|&w| w * w).sum();
        assert!((d.gradient_penalty(&x) - expect).abs() < 1e-12);

        // constant discriminator has zero penalty
        let mut dz = Discriminator::new(&[6, 1], false, &mut rng);
        dz.layers[0].w.zero_fill();
        dz.layers[0].b.data[0] = 0.7;
        assert_eq!(dz.gradient_penalty(&x), 0.0);

        // penalty is never negative
        let d3 = Discriminator::new(&[6, 8, 1], true, &mut rng);
        assert!(d3.gradient_penalty(&x) >= 0.0);
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = Discriminator::new(&[6, 12, 5, 1], true, &mut rng);
        let mut x = random_x(3, 6, 6);
        let g = d.input_gradients(&x);
        let h = 1e-5;
        for r in 0..x.rows {
            for c in 0..x.cols {
                let idx = r * x.cols + c;
                let old = x.data[idx];
                x.data[idx] = old + h;
                let sp = d.score_batch(&x).data[r];
                x.data[idx] = old - h;
                let sm = d.score_batch(&x).data[r];
                x.data[idx] = old;
                let fd = (sp - sm) / (2.0 * h);
                let rel = (g.data[idx] - fd).abs() / g.data[idx].abs().max(fd.abs()).max(1e-2);
                assert!(rel < 1e-4, "({r},{c}): {} vs {}", g.data[idx], fd);
            }
        }
    }

    #[test]
    fn gradient_penalty_param_gradient_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut d = Discriminator::new(&[4, 8, 3, 1], true, &mut rng);
        let x = random_x(5, 4, 8);

        let mut grads = d.zeros_like();
        d.gradient_penalty_backward(&x, 1.0, &mut grads);
        let loss = |q: &Discriminator| q.gradient_penalty(&x);
        let report = check_grads(&mut d, &grads, loss, 1e-5, 1e-4);
        assert!(
            report.failures.is_empty(),
            "{} failures of {}, first {:?}",
            report.failures.len(),
            report.checked,
            report.failures.first()
        );
    }

    #[test]
    fn disc_loss_param_gradient_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut d = Discriminator::new(&[4, 8, 1], true, &mut rng);
        let rx = random_x(6, 4, 10);
        let px = random_x(5, 4, 11);
        let w_gp = 3.0;

        let mut grads = d.zeros_like();
        disc_loss_grads(&d, &rx, &px, w_gp, &mut grads);
        let loss = |q: &Discriminator| disc_loss(q, &rx, &px, w_gp).total;
        let report = check_grads(&mut d, &grads, loss, 1e-5, 1e-4);
        assert!(
            report.failures.is_empty(),
            "{} failures, first {:?}",
            report.failures.len(),
            report.failures.first()
        );
    }

    #[test]
    fn disc_loss_plugin_values() {
        // zero-initialized net scores 0 everywhere: p = 0.5 on both sides,
        // GP = 0, so the loss is exactly 2 ln 2
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut d = Discriminator::new(&[4, 8, 1], true, &mut rng);
        for l in &mut d.layers {
            l.w.zero_fill();
            l.b.zero_fill();
        }
        let rx = random_x(5, 4, 1);
        let px = random_x(5, 4, 2);
        let parts = disc_loss(&d, &rx, &px, 5.0);
        assert!((parts.total - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);

        // w_gp = 0 reduces to the vanilla objective
        let d2 = Discriminator::new(&[4, 8, 1], true, &mut rng);
        let with = disc_loss(&d2, &rx, &px, 0.0);
        assert!((with.total - (with.ref_term + with.policy_term)).abs() < 1e-15);
    }

    #[test]
    fn perfect_discrimination_saturates_at_clamp() {
        // a huge output bias drives scores to +-1; the clamp keeps the loss
        // finite and near w_gp * GP
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut d = Discriminator::new(&[4, 1], true, &mut rng);
        d.layers[0].w.zero_fill();
        d.layers[0].b.data[0] = 50.0;
        let rx = random_x(4, 4, 3);
        let parts_ref_only = disc_loss(&d, &rx, &rx, 0.0);
        // ref side is perfect (p ~ 1-1e-4), policy side saturates badly
        assert!((parts_ref_only.ref_term - (-(1.0f64 - PROB_CLAMP).ln())).abs() < 1e-9);
    }

    #[test]
    fn style_reward_hand_values() {
        let model = ClusterModel {
            k: 2,
            centers: vec![vec![0.0; 2]; 2],
            weights: vec![0.5, 0.5],
            anchors: vec![vec![0.0; 4], vec![10.0; 4]],
            anchor_labels: vec![0, 1],
            method: crate::cluster::ReduceMethod::Pca,
        };
        // D_hat = 0.5 on cluster 0 with W = 0.5: reward = 6/7
        let r = style_reward_for_cluster(0.0, &model, 0);
        assert!((r - 6.0 / 7.0).abs() < 1e-12, "r = {r}");

        // D_hat = 0 -> raw = 0 -> mapped = 1
        let r0 = style_reward_for_cluster(-1.0, &model, 0);
        assert!((r0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn style_reward_always_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let model = ClusterModel {
            k: 3,
            centers: vec![vec![0.0; 2]; 3],
            weights: vec![0.6, 0.3, 0.1],
            anchors: vec![vec![0.0; 8], vec![1.0; 8], vec![-1.0; 8]],
            anchor_labels: vec![0, 1, 2],
            method: crate::cluster::ReduceMethod::Pca,
        };
        let d = Discriminator::new(&[16, 8, 1], true, &mut rng);
        for _ in 0..500 {
            let z: Vec<f64> = (0..8).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let zn: Vec<f64> = (0..8).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let r = style_reward(&d, &model, &pair(z, zn, PairSource::Policy));
            assert!((0.0..=1.0).contains(&r));
        }
    }

    #[test]
    fn uniform_single_cluster_matches_unclustered_path() {
        // with K = 1 and weight 1 the reward is exactly the unclustered
        // -log(1 - D_hat) followed by the mapping
        let uni = ClusterModel::uniform(vec![vec![0.0; 4]]);
        for score in [-0.99, -0.5, 0.0, 0.3, 0.77, 0.999] {
            let got = style_reward_for_cluster(score, &uni, 0);
            let d_hat = (score + 1.0) * 0.5;
            let raw = -(1.0f64 - d_hat).clamp(LOG_ARG_FLOOR, 1.0).ln();
            let expect = (2.0 / (1.0 + raw.exp())).clamp(0.0, 1.0);
            assert!((got - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn update_learns_separable_toy_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let mut d = Discriminator::new(&[4, 16, 8, 1], true, &mut rng);
        let mut opt = Adam::new(1e-2);
        // reference at +1 corner, policy at -1 corner
        let rx = {
            let mut m = random_x(32, 4, 21);
            m.data.iter_mut().for_each(|v| *v = 1.0 + 0.1 * *v);
            m
        };
        let px = {
            let mut m = random_x(32, 4, 22);
            m.data.iter_mut().for_each(|v| *v = -1.0 + 0.1 * *v);
            m
        };
        let first = disc_loss(&d, &rx, &px, 1.0).total;
        let mut last = first;
        for _ in 0..100 {
            last = update_discriminator(&mut d, &mut opt, &rx, &px, 1.0).total;
        }
        assert!(last < 0.5 * first, "loss {first} -> {last}");
        // reference scores should exceed policy scores
        let parts = disc_loss(&d, &rx, &px, 1.0);
        assert!(parts.mean_ref_score > parts.mean_policy_score + 0.5);
    }

    #[test]
    fn zero_lr_update_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let mut d = Discriminator::new(&[4, 8, 1], true, &mut rng);
        let before: Vec<f64> = d.tensors().iter().flat_map(|(_, m)| m.data.clone()).collect();
        let mut opt = Adam::new(0.0);
        let rx = random_x(8, 4, 31);
        let px = random_x(8, 4, 32);
        update_discriminator(&mut d, &mut opt, &rx, &px, 5.0);
        let after: Vec<f64> = d.tensors().iter().flat_map(|(_, m)| m.data.clone()).collect();
        assert_eq!(before, after);
    }
}
