//! Latent-space clustering: 2D reduction (exact t-SNE or PCA), k-means with
//! elbow-based K selection, and the frequency-weighted cluster model that
//! drives the style reward.

use crate::error::{LearnError, Result};
use crate::mvae::Latent;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub const MAX_EXACT_POINTS: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ReduceMethod {
    Tsne { perplexity: f64, iters: usize },
    Pca,
}

impl ReduceMethod {
    pub fn tsne_default() -> Self {
        ReduceMethod::Tsne { perplexity: 30.0, iters: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedPoints {
    pub points: Vec<[f64; 2]>,
    pub method: ReduceMethod,
}

/// Project latents to 2D with the chosen method.
pub fn reduce(latents: &[Latent], method: ReduceMethod, seed: u64) -> Result<ReducedPoints> {
    let n = latents.len();
    match method {
        ReduceMethod::Tsne { perplexity, iters } => {
            if n < 5 {
                return Err(LearnError::TooFewPoints { need: 5, got: n });
            }
            if n > MAX_EXACT_POINTS {
                return Err(LearnError::TooManyPoints { max: MAX_EXACT_POINTS, got: n });
            }
            Ok(ReducedPoints { points: tsne_exact(latents, perplexity, iters, seed), method })
        }
        ReduceMethod::Pca => {
            if n < 2 {
                return Err(LearnError::TooFewPoints { need: 2, got: n });
            }
            Ok(ReducedPoints { points: pca_top2(latents), method })
        }
    }
}

fn pairwise_sq_dists(points: &[Latent]) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let s: f64 = points[i]
                .iter()
                .zip(&points[j])
                .map(|(&a, &b)| (a - b) * (a - b))
                .sum();
            d[i][j] = s;
            d[j][i] = s;
        }
    }
    d
}

/// Per-point precision search so each conditional distribution has the target
/// perplexity, then symmetrized joint probabilities.
fn joint_probabilities(dists: &[Vec<f64>], perplexity: f64) -> Vec<Vec<f64>> {
    let n = dists.len();
    let target_entropy = perplexity.ln();
    let mut p_cond = vec![vec![0.0; n]; n];

    for i in 0..n {
        let mut beta = 1.0;
        let mut beta_min = f64::NEG_INFINITY;
        let mut beta_max = f64::INFINITY;
        for _ in 0..50 {
            // entropy of p_{j|i} at this beta
            let mut sum_p = 0.0;
            let mut sum_dp = 0.0;
            for j in 0..n {
                if j != i {
                    let pij = (-beta * dists[i][j]).exp();
                    sum_p += pij;
                    sum_dp += dists[i][j] * pij;
                }
            }
            let sum_p = sum_p.max(1e-300);
            let entropy = beta * sum_dp / sum_p + sum_p.ln();
            let diff = entropy - target_entropy;
            if diff.abs() < 1e-5 {
                break;
            }
            if diff > 0.0 {
                beta_min = beta;
                beta = if beta_max.is_infinite() { beta * 2.0 } else { (beta + beta_max) * 0.5 };
            } else {
                beta_max = beta;
                beta = if beta_min.is_infinite() { beta * 0.5 } else { (beta + beta_min) * 0.5 };
            }
        }
        let mut sum_p = 0.0;
        for j in 0..n {
            if j != i {
                p_cond[i][j] = (-beta * dists[i][j]).exp();
                sum_p += p_cond[i][j];
            }
        }
        let sum_p = sum_p.max(1e-300);
        for j in 0..n {
            p_cond[i][j] /= sum_p;
        }
    }

    let mut p = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            p[i][j] = ((p_cond[i][j] + p_cond[j][i]) / (2.0 * n as f64)).max(1e-12);
        }
        p[i][i] = 0.0;
    }
    p
}

/// Exact O(N^2) t-SNE with early exaggeration, adaptive gains and momentum.
fn tsne_exact(latents: &[Latent], perplexity: f64, iters: usize, seed: u64) -> Vec<[f64; 2]> {
    let n = latents.len();
    let p = joint_probabilities(&pairwise_sq_dists(latents), perplexity);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y: Vec<[f64; 2]> = (0..n)
        .map(|_| {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            [a * 1e-4, b * 1e-4]
        })
        .collect();
    let mut inc = vec![[0.0f64; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let lr = 200.0;
    const EXAGGERATION: f64 = 12.0;
    const EXAG_ITERS: usize = 250;

    let mut qnum = vec![vec![0.0; n]; n];
    for iter in 0..iters {
        let exag = if iter < EXAG_ITERS { EXAGGERATION } else { 1.0 };
        let momentum = if iter < EXAG_ITERS { 0.5 } else { 0.8 };

        let mut z = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let dx = y[i][0] - y[j][0];
                let dy = y[i][1] - y[j][1];
                let q = 1.0 / (1.0 + dx * dx + dy * dy);
                qnum[i][j] = q;
                qnum[j][i] = q;
                z += 2.0 * q;
            }
        }
        let z = z.max(1e-300);

        for i in 0..n {
            let mut g = [0.0f64; 2];
            for j in 0..n {
                if i != j {
                    // the conventional factor 4 is absorbed into the rate
                    let mult = (exag * p[i][j] - qnum[i][j] / z) * qnum[i][j];
                    g[0] += mult * (y[i][0] - y[j][0]);
                    g[1] += mult * (y[i][1] - y[j][1]);
                }
            }
            for d in 0..2 {
                gains[i][d] = if (g[d] > 0.0) != (inc[i][d] > 0.0) {
                    (gains[i][d] + 0.2).min(50.0)
                } else {
                    (gains[i][d] * 0.8).max(0.01)
                };
                inc[i][d] = momentum * inc[i][d] - lr * gains[i][d] * g[d];
            }
        }
        let mut mean = [0.0f64; 2];
        for i in 0..n {
            y[i][0] += inc[i][0];
            y[i][1] += inc[i][1];
            mean[0] += y[i][0];
            mean[1] += y[i][1];
        }
        mean[0] /= n as f64;
        mean[1] /= n as f64;
        for yi in &mut y {
            yi[0] -= mean[0];
            yi[1] -= mean[1];
        }
    }
    y
}

/// Top-2 principal components of mean-centered data. Component signs are
/// fixed so the largest-magnitude loading is positive.
fn pca_top2(latents: &[Latent]) -> Vec<[f64; 2]> {
    let n = latents.len();
    let d = latents[0].len();
    let mut mean = vec![0.0; d];
    for x in latents {
        for (m, &v) in mean.iter_mut().zip(x) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut cov = nalgebra::DMatrix::<f64>::zeros(d, d);
    for x in latents {
        for a in 0..d {
            let xa = x[a] - mean[a];
            for b in a..d {
                cov[(a, b)] += xa * (x[b] - mean[b]);
            }
        }
    }
    let denom = (n.max(2) - 1) as f64;
    for a in 0..d {
        for b in a..d {
            let v = cov[(a, b)] / denom;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }

    let eig = nalgebra::SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut components = Vec::with_capacity(2);
    for &idx in order.iter().take(2) {
        let col = eig.eigenvectors.column(idx);
        let mut v: Vec<f64> = col.iter().cloned().collect();
        let lead = v
            .iter()
            .cloned()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        if v[lead] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components.push(v);
    }
    while components.len() < 2 {
        components.push(vec![0.0; d]);
    }

    latents
        .iter()
        .map(|x| {
            let mut out = [0.0f64; 2];
            for (c, o) in components.iter().zip(out.iter_mut()) {
                *o = x.iter().zip(c).zip(&mean).map(|((&xv, &cv), &mv)| (xv - mv) * cv).sum();
            }
            out
        })
        .collect()
}

pub struct KmeansResult {
    pub centers: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub sse: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// Lloyd iterations from k-means++ seeding until the assignment fixpoint or
/// 300 iterations. The SSE is non-increasing across iterations.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<KmeansResult> {
    if points.is_empty() {
        return Err(LearnError::EmptyInput);
    }
    assert!(k >= 1 && k <= points.len(), "k must be in [1, N]");
    let n = points.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // k-means++ seeding
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(points[rng.gen_range(0..n)].clone());
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            rng.gen_range(0..n)
        } else {
            let mut target = rng.gen_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        };
        centers.push(points[next].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, centers.last().unwrap()));
        }
    }

    let mut assignments = vec![0usize; n];
    let mut prev_sse = f64::INFINITY;
    for _ in 0..300 {
        let mut changed = false;
        let mut sse = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (best, best_d) = centers
                .iter()
                .enumerate()
                .map(|(c, ctr)| (c, sq_dist(p, ctr)))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
                .unwrap();
            if assignments[i] != best {
                assignments[i] = best;
                changed = true;
            }
            sse += best_d;
        }
        debug_assert!(sse <= prev_sse + 1e-9, "SSE increased: {prev_sse} -> {sse}");
        prev_sse = sse;

        // recompute centers; an empty cluster is re-seeded at the point
        // farthest from its current center
        let dim = points[0].len();
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in points.iter().enumerate() {
            counts[assignments[i]] += 1;
            for (s, &v) in sums[assignments[i]].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n)
                    .max_by(|&a, &b| {
                        sq_dist(&points[a], &centers[assignments[a]])
                            .total_cmp(&sq_dist(&points[b], &centers[assignments[b]]))
                    })
                    .unwrap();
                centers[c] = points[far].clone();
                changed = true;
            } else {
                for (j, s) in sums[c].iter().enumerate() {
                    centers[c][j] = s / counts[c] as f64;
                }
            }
        }
        if !changed {
            break;
        }
    }

    let sse = points
        .iter()
        .zip(&assignments)
        .map(|(p, &a)| sq_dist(p, &centers[a]))
        .sum();
    Ok(KmeansResult { centers, assignments, sse })
}

/// Best of `restarts` k-means runs by SSE.
pub fn kmeans_restarts(points: &[Vec<f64>], k: usize, seed: u64, restarts: usize) -> Result<KmeansResult> {
    let mut best: Option<KmeansResult> = None;
    for r in 0..restarts.max(1) {
        let run = kmeans(points, k, seed.wrapping_add(r as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))?;
        if best.as_ref().map(|b| run.sse < b.sse).unwrap_or(true) {
            best = Some(run);
        }
    }
    Ok(best.unwrap())
}

/// Geometric elbow: the interior k maximizing perpendicular distance from
/// (k, SSE(k)) to the chord between (1, SSE(1)) and (k_max, SSE(k_max)).
pub fn select_k_elbow(points: &[Vec<f64>], k_max: usize, seed: u64, restarts: usize) -> Result<usize> {
    assert!(points.len() > k_max, "need more points than k_max");
    let sses: Vec<f64> = (1..=k_max)
        .map(|k| kmeans_restarts(points, k, seed ^ (k as u64) << 16, restarts).map(|r| r.sse))
        .collect::<Result<_>>()?;

    let (x1, y1) = (1.0, sses[0]);
    let (x2, y2) = (k_max as f64, sses[k_max - 1]);
    let dx = x2 - x1;
    let dy = y2 - y1;
    let chord = (dx * dx + dy * dy).sqrt().max(1e-300);
    let mut best_k = 1;
    let mut best_d = f64::NEG_INFINITY;
    for (i, &s) in sses.iter().enumerate() {
        let k = (i + 1) as f64;
        let dist = (dy * k - dx * s + x2 * y1 - y2 * x1).abs() / chord;
        if dist > best_d + 1e-12 {
            best_d = dist;
            best_k = i + 1;
        }
    }
    Ok(best_k)
}

/// Frequency-weighted cluster model over the reference latents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    /// Cluster centers in the reduced 2D space.
    pub centers: Vec<Vec<f64>>,
    /// Per-cluster frequency weights, positive and summing to one.
    pub weights: Vec<f64>,
    /// Reference latents, kept for out-of-sample assignment.
    pub anchors: Vec<Latent>,
    pub anchor_labels: Vec<usize>,
    pub method: ReduceMethod,
}

impl ClusterModel {
    pub fn anchor_count(&self) -> usize {
        self.anchors.len()
    }

    /// Uniform single-cluster model (the no-clustering ablation).
    pub fn uniform(anchors: Vec<Latent>) -> Self {
        let n = anchors.len();
        ClusterModel {
            k: 1,
            centers: vec![vec![0.0, 0.0]],
            weights: vec![1.0],
            anchor_labels: vec![0; n],
            anchors,
            method: ReduceMethod::Pca,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterBuildConfig {
    pub method: ReduceMethod,
    pub k_max: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for ClusterBuildConfig {
    fn default() -> Self {
        ClusterBuildConfig {
            method: ReduceMethod::tsne_default(),
            k_max: 10,
            restarts: 10,
            seed: 0,
        }
    }
}

/// Reduce, pick K by the elbow, cluster, and derive frequency weights.
pub fn build_cluster_model(latents: &[Latent], cfg: &ClusterBuildConfig) -> Result<ClusterModel> {
    if latents.len() < 10 {
        return Err(LearnError::TooFewPoints { need: 10, got: latents.len() });
    }
    let reduced = reduce(latents, cfg.method, cfg.seed)?;
    let pts: Vec<Vec<f64>> = reduced.points.iter().map(|p| p.to_vec()).collect();
    let k_max = cfg.k_max.min(latents.len() - 1);
    let k = select_k_elbow(&pts, k_max, cfg.seed, cfg.restarts)?;
    let km = kmeans_restarts(&pts, k, cfg.seed ^ 0xc1u64, cfg.restarts)?;

    let mut counts = vec![0usize; k];
    for &a in &km.assignments {
        counts[a] += 1;
    }
    let total: usize = counts.iter().sum();
    let weights: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();

    Ok(ClusterModel {
        k,
        centers: km.centers,
        weights,
        anchors: latents.to_vec(),
        anchor_labels: km.assignments,
        method: cfg.method,
    })
}

/// Label of the nearest anchor in the full latent space; exact distance ties
/// resolve to the smaller cluster label.
pub fn assign_cluster(model: &ClusterModel, z: &[f64]) -> usize {
    debug_assert!(!model.anchors.is_empty());
    let mut best = (f64::INFINITY, usize::MAX);
    for (anchor, &label) in model.anchors.iter().zip(&model.anchor_labels) {
        let d = sq_dist(anchor, z);
        if d < best.0 || (d == best.0 && label < best.1) {
            best = (d, label);
        }
    }
    best.1
}
