//! Shared Gaussian policy, value function, GAE and the clipped-surrogate
//! update.

use crate::error::{LearnError, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use school_nn::layers::MlpCache;
use school_nn::{Adam, Mat, Mlp, ParamStruct};
use serde::{Deserialize, Serialize};

pub const ACTION_DIM: usize = 3;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Gaussian policy: an MLP mean head plus a fixed diagonal log-std.
#[derive(Debug, Clone)]
pub struct PolicyParams {
    pub net: Mlp,
    pub log_std: Vec<f64>,
}

impl PolicyParams {
    pub fn new(obs_dim: usize, hidden: &[usize], log_std: Vec<f64>, seed: u64) -> Self {
        assert_eq!(log_std.len(), ACTION_DIM);
        assert!(log_std.iter().all(|v| v.is_finite()));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dims = vec![obs_dim];
        dims.extend_from_slice(hidden);
        dims.push(ACTION_DIM);
        let mut net = Mlp::new(&dims, &mut rng);
        // small head init keeps initial means near zero so the actuation
        // clamp is not saturated before any learning happens
        if let Some(last) = net.layers.last_mut() {
            last.w.scale_inplace(0.01);
            last.b.zero_fill();
        }
        PolicyParams { net, log_std }
    }

    pub fn obs_dim(&self) -> usize {
        self.net.layers[0].w.rows
    }

    /// Deterministic action means for a batch of observations.
    pub fn forward(&self, obs: &Mat) -> Mat {
        self.net.forward(obs).0
    }

    pub fn forward_cached(&self, obs: &Mat) -> (Mat, MlpCache) {
        self.net.forward(obs)
    }
}

impl ParamStruct for PolicyParams {
    fn tensors(&self) -> Vec<(String, &Mat)> {
        self.net.tensors()
    }
    fn tensors_mut(&mut self) -> Vec<(String, &mut Mat)> {
        self.net.tensors_mut()
    }
}

#[derive(Debug, Clone)]
pub struct ValueParams {
    pub net: Mlp,
    /// Output scale: the net regresses returns / scale, keeping its targets
    /// O(1) even at long effective horizons (default 1/(1-gamma)).
    pub scale: f64,
}

impl ValueParams {
    pub fn new(obs_dim: usize, hidden: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dims = vec![obs_dim];
        dims.extend_from_slice(hidden);
        dims.push(1);
        let mut net = Mlp::new(&dims, &mut rng);
        if let Some(last) = net.layers.last_mut() {
            last.w.scale_inplace(0.1);
            last.b.zero_fill();
        }
        ValueParams { net, scale: 1.0 }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        assert!(scale > 0.0 && scale.is_finite());
        self.scale = scale;
        self
    }

    /// Value estimates in return units.
    pub fn forward(&self, obs: &Mat) -> Mat {
        let mut v = self.net.forward(obs).0;
        v.scale_inplace(self.scale);
        v
    }
}

impl ParamStruct for ValueParams {
    fn tensors(&self) -> Vec<(String, &Mat)> {
        self.net.tensors()
    }
    fn tensors_mut(&mut self) -> Vec<(String, &mut Mat)> {
        self.net.tensors_mut()
    }
}

/// Log density of a diagonal Gaussian at `action`.
pub fn gaussian_log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((&m, &ls), &a)| {
            let z = (a - m) / ls.exp();
            -(ls + 0.5 * LN_2PI + 0.5 * z * z)
        })
        .sum()
}

/// Differential entropy of the fixed-covariance Gaussian.
pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|&ls| ls + 0.5 * (1.0 + LN_2PI)).sum()
}

/// Sample an (unclamped) action and its log probability; deterministic mode
/// returns the mean.
pub fn sample_action(
    mean: &[f64],
    log_std: &[f64],
    rng: &mut ChaCha8Rng,
    deterministic: bool,
) -> (Vec<f64>, f64) {
    let action: Vec<f64> = if deterministic {
        mean.to_vec()
    } else {
        mean.iter()
            .zip(log_std)
            .map(|(&m, &ls)| {
                let eps: f64 = rng.sample(StandardNormal);
                m + ls.exp() * eps
            })
            .collect()
    };
    let lp = gaussian_log_prob(mean, log_std, &action);
    (action, lp)
}

/// Generalized advantage estimation.
///
/// `values` has one bootstrap entry more than `rewards`; a terminal step
/// (done = true) cuts both the bootstrap and the recursion.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let t = rewards.len();
    if values.len() != t + 1 || dones.len() != t {
        return Err(LearnError::LengthMismatch { a: values.len(), b: t + 1 });
    }
    let mut advantages = vec![0.0; t];
    let mut acc = 0.0;
    for i in (0..t).rev() {
        let nonterminal = if dones[i] { 0.0 } else { 1.0 };
        let delta = rewards[i] + gamma * values[i + 1] * nonterminal - values[i];
        acc = delta + gamma * lambda * nonterminal * acc;
        advantages[i] = acc;
    }
    let returns = advantages.iter().zip(values).map(|(&a, &v)| a + v).collect();
    Ok((advantages, returns))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpoConfig {
    pub eps_clip: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub entropy_coef: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig { eps_clip: 0.2, epochs: 5, minibatch: 1000, entropy_coef: 5e-3 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub mean_ratio: f64,
    /// Ratios outside the [0.5, 2.0] sanity band, across all logged minibatches.
    pub ratio_band_violations: usize,
    pub ratios_seen: usize,
}

pub struct PpoBatch {
    pub obs: Mat,
    pub actions: Mat,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

/// Clipped-surrogate PPO with per-batch advantage standardization; value net
/// regresses to the GAE returns. Minibatch order is drawn from `rng`.
pub fn ppo_update(
    policy: &mut PolicyParams,
    value: &mut ValueParams,
    p_opt: &mut Adam,
    v_opt: &mut Adam,
    batch: &PpoBatch,
    cfg: &PpoConfig,
    rng: &mut ChaCha8Rng,
) -> PpoStats {
    let n = batch.obs.rows;
    assert!(n > 0, "empty PPO batch");
    assert_eq!(batch.actions.rows, n);
    assert_eq!(batch.old_log_probs.len(), n);
    assert_eq!(batch.advantages.len(), n);
    assert_eq!(batch.returns.len(), n);

    // standardize advantages over the whole batch
    let mean_a: f64 = batch.advantages.iter().sum::<f64>() / n as f64;
    let var_a: f64 =
        batch.advantages.iter().map(|&a| (a - mean_a) * (a - mean_a)).sum::<f64>() / n as f64;
    let std_a = var_a.sqrt().max(1e-8);
    let adv: Vec<f64> = batch.advantages.iter().map(|&a| (a - mean_a) / std_a).collect();

    let entropy = gaussian_entropy(&policy.log_std);
    let mut stats = PpoStats { entropy, ..Default::default() };
    let mut ratio_sum = 0.0;

    let obs_dim = batch.obs.cols;
    for _ in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        for chunk in order.chunks(cfg.minibatch.max(1)) {
            let m = chunk.len();
            let mut obs = Mat::zeros(m, obs_dim);
            for (r, &idx) in chunk.iter().enumerate() {
                obs.row_mut(r).copy_from_slice(batch.obs.row(idx));
            }

            // policy pass
            let (mean, cache) = policy.forward_cached(&obs);
            let mut dmean = Mat::zeros(m, ACTION_DIM);
            let mut p_loss = 0.0;
            for (r, &idx) in chunk.iter().enumerate() {
                let a_row = batch.actions.row(idx);
                let lp_new = gaussian_log_prob(mean.row(r), &policy.log_std, a_row);
                let ratio = (lp_new - batch.old_log_probs[idx]).exp();
                ratio_sum += ratio;
                stats.ratios_seen += 1;
                if !(0.5..=2.0).contains(&ratio) {
                    stats.ratio_band_violations += 1;
                }
                let a = adv[idx];
                let unclipped = ratio * a;
                let clipped = ratio.clamp(1.0 - cfg.eps_clip, 1.0 + cfg.eps_clip) * a;
                p_loss -= unclipped.min(clipped);
                // gradient flows only when the unclipped branch is active
                if unclipped <= clipped {
                    let coeff = -a * ratio / m as f64;
                    for j in 0..ACTION_DIM {
                        let sigma2 = (2.0 * policy.log_std[j]).exp();
                        // d lp/d mean_j = (a_j - mean_j) / sigma^2
                        dmean.set(r, j, coeff * (a_row[j] - mean.get(r, j)) / sigma2);
                    }
                }
            }
            p_loss /= m as f64;
            p_loss -= cfg.entropy_coef * entropy;
            stats.policy_loss = p_loss;
            let mut p_grads = policy.net.zeros_like();
            policy.net.backward(&cache, &dmean, &mut p_grads);
            let p_grads = PolicyParams { net: p_grads, log_std: policy.log_std.clone() };
            p_opt.step(policy, &p_grads);

            // value pass: the net regresses scaled-down returns
            let (v, vcache) = value.net.forward(&obs);
            let mut dv = Mat::zeros(m, 1);
            let mut v_loss = 0.0;
            for (r, &idx) in chunk.iter().enumerate() {
                let err = v.get(r, 0) - batch.returns[idx] / value.scale;
                v_loss += err * err;
                dv.set(r, 0, 2.0 * err / m as f64);
            }
            stats.value_loss = v_loss / m as f64;
            let mut v_grads = value.net.zeros_like();
            value.net.backward(&vcache, &dv, &mut v_grads);
            let v_grads = ValueParams { net: v_grads, scale: value.scale };
            v_opt.step(value, &v_grads);
        }
    }
    stats.mean_ratio = if stats.ratios_seen > 0 { ratio_sum / stats.ratios_seen as f64 } else { 1.0 };
    stats
}
