//! Evaluation metrics: Fréchet distance between feature Gaussians, cluster
//! histogram JS divergence, average pairwise trajectory distance and
//! normalized task return.

use crate::cluster::{ClusterModel, assign_cluster};
use crate::error::{LearnError, Result};
use crate::mvae::Latent;
use nalgebra::DMatrix;
use school_core::sim::AgentState;
use serde::{Deserialize, Serialize};

pub const PSD_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub fid: f64,
    pub js: f64,
    pub apd_mean: f64,
    pub apd_std: f64,
    pub task_return_mean: f64,
    pub task_return_std: f64,
}

fn mean_and_cov(set: &[Vec<f64>]) -> (Vec<f64>, DMatrix<f64>) {
    let n = set.len();
    let d = set[0].len();
    let mut mean = vec![0.0; d];
    for x in set {
        for (m, &v) in mean.iter_mut().zip(x) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for x in set {
        for a in 0..d {
            let xa = x[a] - mean[a];
            for b in a..d {
                cov[(a, b)] += xa * (x[b] - mean[b]);
            }
        }
    }
    let denom = (n - 1) as f64;
    for a in 0..d {
        for b in a..d {
            let v = cov[(a, b)] / denom;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    (mean, cov)
}

/// Symmetric PSD square root by eigendecomposition. Eigenvalues below
/// -PSD_TOLERANCE are an error; small negatives clamp to zero.
fn sym_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(sym);
    let mut vals = eig.eigenvalues.clone();
    for v in vals.iter_mut() {
        if *v < -PSD_TOLERANCE {
            return Err(LearnError::NotPositiveSemiDefinite(*v));
        }
        *v = v.max(0.0).sqrt();
    }
    let d = nalgebra::DMatrix::from_diagonal(&vals);
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

/// Fréchet distance between Gaussian fits of two feature sets:
/// ||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa^1/2 Sb Sa^1/2)^1/2).
pub fn fid(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(LearnError::TooFewPoints { need: 2, got: a.len().min(b.len()) });
    }
    if a[0].len() != b[0].len() {
        return Err(LearnError::DimensionMismatch { a: a[0].len(), b: b[0].len() });
    }
    let (mu_a, cov_a) = mean_and_cov(a);
    let (mu_b, cov_b) = mean_and_cov(b);

    let mean_term: f64 = mu_a.iter().zip(&mu_b).map(|(&x, &y)| (x - y) * (x - y)).sum();

    let sqrt_a = sym_sqrt(&cov_a)?;
    let inner = &sqrt_a * &cov_b * &sqrt_a;
    let inner_sym = (&inner + inner.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(inner_sym);
    let mut tr_sqrt = 0.0;
    for &v in eig.eigenvalues.iter() {
        if v < -PSD_TOLERANCE {
            return Err(LearnError::NotPositiveSemiDefinite(v));
        }
        tr_sqrt += v.max(0.0).sqrt();
    }
    Ok(mean_term + cov_a.trace() + cov_b.trace() - 2.0 * tr_sqrt)
}

/// JS divergence between two discrete distributions, base-2 logs, in [0, 1].
pub fn js_from_distributions(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len());
    let kl = |x: &[f64], m: &[f64]| -> f64 {
        x.iter()
            .zip(m)
            .map(|(&xi, &mi)| if xi > 0.0 { xi * (xi / mi).log2() } else { 0.0 })
            .sum()
    };
    let m: Vec<f64> = p.iter().zip(q).map(|(&a, &b)| 0.5 * (a + b)).collect();
    0.5 * kl(p, &m) + 0.5 * kl(q, &m)
}

/// Cluster histogram of latents, smoothed with one pseudo-count split over
/// the bins so empty clusters keep the KL terms finite.
pub fn cluster_histogram(model: &ClusterModel, latents: &[Latent]) -> Vec<f64> {
    let mut counts = vec![0usize; model.k];
    for z in latents {
        counts[assign_cluster(model, z)] += 1;
    }
    let total = latents.len() as f64 + 1.0;
    let alpha = 1.0 / model.k as f64;
    counts.iter().map(|&c| (c as f64 + alpha) / total).collect()
}

/// JS divergence between the cluster histograms of two latent sets.
pub fn js_divergence(a: &[Latent], b: &[Latent], model: &ClusterModel) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(LearnError::EmptyInput);
    }
    Ok(js_from_distributions(&cluster_histogram(model, a), &cluster_histogram(model, b)))
}

/// Average pairwise distance over N state trajectories of equal length:
/// 1/(N(N-1)) * sum over ordered pairs of sqrt(sum_t ||s_i^t - s_j^t||).
pub fn apd(trajectories: &[Vec<Vec<f64>>]) -> Result<f64> {
    if trajectories.len() < 2 {
        return Err(LearnError::TooFewPoints { need: 2, got: trajectories.len() });
    }
    let l = trajectories[0].len();
    for t in trajectories {
        if t.len() != l {
            return Err(LearnError::LengthMismatch { a: l, b: t.len() });
        }
    }
    let n = trajectories.len();
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let inner: f64 = (0..l)
                    .map(|t| {
                        trajectories[i][t]
                            .iter()
                            .zip(&trajectories[j][t])
                            .map(|(&a, &b)| (a - b) * (a - b))
                            .sum::<f64>()
                            .sqrt()
                    })
                    .sum();
                sum += inner.sqrt();
            }
        }
    }
    Ok(sum / (n * (n - 1)) as f64)
}

/// The 7-number state vector used for APD: position, forward, speed.
pub fn agent_state_features(a: &AgentState) -> Vec<f64> {
    vec![a.position.x, a.position.y, a.position.z, a.forward.x, a.forward.y, a.forward.z, a.speed]
}

/// 2D embedding rows (x, y, label) for plotting; delegates to the latent
/// reduction.
pub fn export_embedding(
    latents: &[Latent],
    labels: &[String],
    method: crate::cluster::ReduceMethod,
    seed: u64,
) -> Result<Vec<(f64, f64, String)>> {
    assert_eq!(latents.len(), labels.len());
    let reduced = crate::cluster::reduce(latents, method, seed)?;
    Ok(reduced
        .points
        .iter()
        .zip(labels)
        .map(|(p, l)| (p[0], p[1], l.clone()))
        .collect())
}

/// Mean and population std of per-episode mean normalized task rewards.
pub fn task_return(episodes: &[Vec<f64>]) -> Result<(f64, f64)> {
    let eps: Vec<&Vec<f64>> = episodes.iter().filter(|e| !e.is_empty()).collect();
    if eps.is_empty() {
        return Err(LearnError::EmptyInput);
    }
    let per: Vec<f64> = eps.iter().map(|e| e.iter().sum::<f64>() / e.len() as f64).collect();
    let mean = per.iter().sum::<f64>() / per.len() as f64;
    let var = per.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / per.len() as f64;
    Ok((mean, var.sqrt()))
}
