//! Masked video autoencoder over silhouette clips.
//!
//! Encoder: patch embedding + learned spatial/temporal position embeddings,
//! pre-norm transformer blocks, mean pooling, then linear mean / log-variance
//! heads. Decoder: a learned mask token plus a projection of the latent,
//! broadcast over the token grid, more transformer blocks and a sigmoid pixel
//! head. The whole gradient is hand-chained and verified against finite
//! differences at miniature scale.

use crate::error::{LearnError, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use school_core::clip::{Clip, MaskedClip, CLIP_LEN, mask_clip};
use school_nn::attention::BlockCache;
use school_nn::layers::{LayerNormCache, sigmoid_backward, sigmoid_forward};
use school_nn::{Adam, LayerNorm, Linear, Mat, ParamStruct, TransformerBlock};
use serde::{Deserialize, Serialize};

pub type Latent = Vec<f64>;

const LOGVAR_CLAMP: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MvaeConfig {
    pub frame_w: usize,
    pub frame_h: usize,
    pub patch: usize,
    pub dim: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub heads: usize,
    pub mlp_hidden: usize,
    pub latent: usize,
    pub beta: f64,
}

impl Default for MvaeConfig {
    fn default() -> Self {
        MvaeConfig {
            frame_w: 64,
            frame_h: 64,
            patch: 8,
            dim: 128,
            enc_layers: 4,
            dec_layers: 2,
            heads: 4,
            mlp_hidden: 512,
            latent: 100,
            beta: 0.5,
        }
    }
}

impl MvaeConfig {
    pub fn patches_per_frame(&self) -> usize {
        (self.frame_w / self.patch) * (self.frame_h / self.patch)
    }

    pub fn tokens(&self) -> usize {
        CLIP_LEN * self.patches_per_frame()
    }

    pub fn patch_dim(&self) -> usize {
        self.patch * self.patch
    }
}

#[derive(Debug, Clone)]
pub struct MvaeParams {
    pub cfg: MvaeConfig,
    pub patch_embed: Linear,
    pub pos_spatial: Mat,
    pub pos_temporal: Mat,
    pub enc_blocks: Vec<TransformerBlock>,
    pub enc_norm: LayerNorm,
    pub mu_head: Linear,
    pub logvar_head: Linear,
    pub z_proj: Linear,
    pub mask_token: Mat,
    pub dec_blocks: Vec<TransformerBlock>,
    pub dec_norm: LayerNorm,
    pub out_proj: Linear,
}

impl MvaeParams {
    pub fn new(cfg: MvaeConfig, seed: u64) -> Self {
        assert_eq!(cfg.frame_w % cfg.patch, 0);
        assert_eq!(cfg.frame_h % cfg.patch, 0);
        assert_eq!(cfg.dim % cfg.heads, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let np = cfg.patches_per_frame();
        MvaeParams {
            patch_embed: Linear::new(cfg.patch_dim(), cfg.dim, &mut rng),
            pos_spatial: Mat::randn(np, cfg.dim, 0.02, &mut rng),
            pos_temporal: Mat::randn(CLIP_LEN, cfg.dim, 0.02, &mut rng),
            enc_blocks: (0..cfg.enc_layers)
                .map(|_| TransformerBlock::new(cfg.dim, cfg.heads, cfg.mlp_hidden, &mut rng))
                .collect(),
            enc_norm: LayerNorm::new(cfg.dim),
            mu_head: Linear::new(cfg.dim, cfg.latent, &mut rng),
            logvar_head: Linear::new(cfg.dim, cfg.latent, &mut rng),
            z_proj: Linear::new(cfg.latent, cfg.dim, &mut rng),
            mask_token: Mat::randn(1, cfg.dim, 0.02, &mut rng),
            dec_blocks: (0..cfg.dec_layers)
                .map(|_| TransformerBlock::new(cfg.dim, cfg.heads, cfg.mlp_hidden, &mut rng))
                .collect(),
            dec_norm: LayerNorm::new(cfg.dim),
            out_proj: Linear::new(cfg.dim, cfg.patch_dim(), &mut rng),
            cfg,
        }
    }

    pub fn zeros_like(&self) -> Self {
        MvaeParams {
            cfg: self.cfg,
            patch_embed: self.patch_embed.zeros_like(),
            pos_spatial: Mat::zeros(self.pos_spatial.rows, self.pos_spatial.cols),
            pos_temporal: Mat::zeros(self.pos_temporal.rows, self.pos_temporal.cols),
            enc_blocks: self.enc_blocks.iter().map(|b| b.zeros_like()).collect(),
            enc_norm: self.enc_norm.zeros_like(),
            mu_head: self.mu_head.zeros_like(),
            logvar_head: self.logvar_head.zeros_like(),
            z_proj: self.z_proj.zeros_like(),
            mask_token: Mat::zeros(1, self.mask_token.cols),
            dec_blocks: self.dec_blocks.iter().map(|b| b.zeros_like()).collect(),
            dec_norm: self.dec_norm.zeros_like(),
            out_proj: self.out_proj.zeros_like(),
        }
    }
}

impl ParamStruct for MvaeParams {
    fn tensors(&self) -> Vec<(String, &Mat)> {
        let mut out: Vec<(String, &Mat)> = Vec::new();
        for (n, m) in self.patch_embed.tensors() {
            out.push((format!("patch_embed.{n}"), m));
        }
        out.push(("pos_spatial".into(), &self.pos_spatial));
        out.push(("pos_temporal".into(), &self.pos_temporal));
        for (i, b) in self.enc_blocks.iter().enumerate() {
            for (n, m) in b.tensors() {
                out.push((format!("enc.{i}.{n}"), m));
            }
        }
        for (n, m) in self.enc_norm.tensors() {
            out.push((format!("enc_norm.{n}"), m));
        }
        for (n, m) in self.mu_head.tensors() {
            out.push((format!("mu_head.{n}"), m));
        }
        for (n, m) in self.logvar_head.tensors() {
            out.push((format!("logvar_head.{n}"), m));
        }
        for (n, m) in self.z_proj.tensors() {
            out.push((format!("z_proj.{n}"), m));
        }
        out.push(("mask_token".into(), &self.mask_token));
        for (i, b) in self.dec_blocks.iter().enumerate() {
            for (n, m) in b.tensors() {
                out.push((format!("dec.{i}.{n}"), m));
            }
        }
        for (n, m) in self.dec_norm.tensors() {
            out.push((format!("dec_norm.{n}"), m));
        }
        for (n, m) in self.out_proj.tensors() {
            out.push((format!("out_proj.{n}"), m));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Mat)> {
        let mut out: Vec<(String, &mut Mat)> = Vec::new();
        for (n, m) in self.patch_embed.tensors_mut() {
            out.push((format!("patch_embed.{n}"), m));
        }
        out.push(("pos_spatial".into(), &mut self.pos_spatial));
        out.push(("pos_temporal".into(), &mut self.pos_temporal));
        for (i, b) in self.enc_blocks.iter_mut().enumerate() {
            for (n, m) in b.tensors_mut() {
                out.push((format!("enc.{i}.{n}"), m));
            }
        }
        for (n, m) in self.enc_norm.tensors_mut() {
            out.push((format!("enc_norm.{n}"), m));
        }
        for (n, m) in self.mu_head.tensors_mut() {
            out.push((format!("mu_head.{n}"), m));
        }
        for (n, m) in self.logvar_head.tensors_mut() {
            out.push((format!("logvar_head.{n}"), m));
        }
        for (n, m) in self.z_proj.tensors_mut() {
            out.push((format!("z_proj.{n}"), m));
        }
        out.push(("mask_token".into(), &mut self.mask_token));
        for (i, b) in self.dec_blocks.iter_mut().enumerate() {
            for (n, m) in b.tensors_mut() {
                out.push((format!("dec.{i}.{n}"), m));
            }
        }
        for (n, m) in self.dec_norm.tensors_mut() {
            out.push((format!("dec_norm.{n}"), m));
        }
        for (n, m) in self.out_proj.tensors_mut() {
            out.push((format!("out_proj.{n}"), m));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MvaeLosses {
    pub recon: f64,
    pub kl: f64,
    pub total: f64,
}

pub enum EncodeMode<'a> {
    Mean,
    Sample(&'a mut ChaCha8Rng),
}

/// Flatten a masked clip into the token matrix; masked patches read as zero.
pub fn tokenize_masked(cfg: &MvaeConfig, mc: &MaskedClip) -> Mat {
    let mut tokens = tokenize(cfg, &mc.clip);
    let pc = cfg.frame_w / cfg.patch;
    for &(f, pr, pcl) in &mc.masked {
        let s = pr as usize * pc + pcl as usize;
        let row = f as usize * cfg.patches_per_frame() + s;
        tokens.row_mut(row).iter_mut().for_each(|v| *v = 0.0);
    }
    tokens
}

/// Flatten an unmasked clip into the token matrix [tokens, patch*patch].
pub fn tokenize(cfg: &MvaeConfig, clip: &Clip) -> Mat {
    assert_eq!(clip.width(), cfg.frame_w);
    assert_eq!(clip.height(), cfg.frame_h);
    let p = cfg.patch;
    let pc = cfg.frame_w / p;
    let pr = cfg.frame_h / p;
    let mut tokens = Mat::zeros(cfg.tokens(), cfg.patch_dim());
    for (t, frame) in clip.frames.iter().enumerate() {
        for r in 0..pr {
            for c in 0..pc {
                let row = t * pr * pc + r * pc + c;
                let dst = tokens.row_mut(row);
                for py in 0..p {
                    let src = &frame.bits[(r * p + py) * cfg.frame_w + c * p..][..p];
                    for (px, &b) in src.iter().enumerate() {
                        dst[py * p + px] = b as f64;
                    }
                }
            }
        }
    }
    tokens
}

/// Inverse of `tokenize`: per-frame pixel grids in [0,1].
pub fn detokenize(cfg: &MvaeConfig, tokens: &Mat) -> Vec<Vec<f64>> {
    let p = cfg.patch;
    let pc = cfg.frame_w / p;
    let pr = cfg.frame_h / p;
    let mut frames = vec![vec![0.0; cfg.frame_w * cfg.frame_h]; CLIP_LEN];
    for t in 0..CLIP_LEN {
        for r in 0..pr {
            for c in 0..pc {
                let row = tokens.row(t * pr * pc + r * pc + c);
                for py in 0..p {
                    for px in 0..p {
                        frames[t][(r * p + py) * cfg.frame_w + c * p + px] = row[py * p + px];
                    }
                }
            }
        }
    }
    frames
}

struct EncCache {
    tokens: Mat,
    embedded: Mat,
    blocks: Vec<(Mat, BlockCache)>, // (input, cache) per block
    norm_in: Mat,
    norm_cache: LayerNormCache,
    feat: Mat,
    pooled: Mat,
    logvar_raw: Mat,
}

fn encode_forward(p: &MvaeParams, tokens: Mat) -> (Mat, Mat, EncCache) {
    let cfg = &p.cfg;
    let np = cfg.patches_per_frame();
    let mut x = p.patch_embed.forward(&tokens);
    for row in 0..x.rows {
        let (t, s) = (row / np, row % np);
        let xr = x.row_mut(row);
        for j in 0..cfg.dim {
            xr[j] += p.pos_spatial.get(s, j) + p.pos_temporal.get(t, j);
        }
    }
    let embedded = x.clone();
    let mut blocks = Vec::with_capacity(p.enc_blocks.len());
    for b in &p.enc_blocks {
        let input = x.clone();
        let (y, cache) = b.forward(&x);
        blocks.push((input, cache));
        x = y;
    }
    let norm_in = x.clone();
    let (feat, norm_cache) = p.enc_norm.forward(&x);
    let pooled = feat.row_mean();
    let mu = p.mu_head.forward(&pooled);
    let logvar_raw = p.logvar_head.forward(&pooled);
    let logvar = logvar_raw.map(|v| v.clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP));
    (
        mu,
        logvar,
        EncCache { tokens, embedded, blocks, norm_in, norm_cache, feat, pooled, logvar_raw },
    )
}

struct DecCache {
    z: Mat,
    blocks: Vec<(Mat, BlockCache)>,
    norm_cache: LayerNormCache,
    normed: Mat,
    recon: Mat,
}

fn decode_forward(p: &MvaeParams, z: &Mat) -> (Mat, DecCache) {
    let cfg = &p.cfg;
    let np = cfg.patches_per_frame();
    let zp = p.z_proj.forward(z); // [1, D]
    let mut x = Mat::zeros(cfg.tokens(), cfg.dim);
    for row in 0..x.rows {
        let (t, s) = (row / np, row % np);
        let xr = x.row_mut(row);
        for j in 0..cfg.dim {
            xr[j] = p.mask_token.data[j] + zp.data[j] + p.pos_spatial.get(s, j) + p.pos_temporal.get(t, j);
        }
    }
    let mut blocks = Vec::with_capacity(p.dec_blocks.len());
    for b in &p.dec_blocks {
        let input = x.clone();
        let (y, cache) = b.forward(&x);
        blocks.push((input, cache));
        x = y;
    }
    let (normed, norm_cache) = p.dec_norm.forward(&x);
    let logits = p.out_proj.forward(&normed);
    let recon = sigmoid_forward(&logits);
    (recon.clone(), DecCache { z: z.clone(), blocks, norm_cache, normed, recon })
}

fn check_clip_shape(cfg: &MvaeConfig, clip: &Clip) -> Result<()> {
    if clip.width() != cfg.frame_w || clip.height() != cfg.frame_h {
        return Err(LearnError::ClipShapeMismatch {
            want_w: cfg.frame_w,
            want_h: cfg.frame_h,
            got_w: clip.width(),
            got_h: clip.height(),
        });
    }
    Ok(())
}

/// Encode a masked clip to (mu, logvar, z).
pub fn encode(p: &MvaeParams, mc: &MaskedClip, mode: EncodeMode) -> Result<(Latent, Latent, Latent)> {
    check_clip_shape(&p.cfg, &mc.clip)?;
    let (mu, logvar, _) = encode_forward(p, tokenize_masked(&p.cfg, mc));
    let z = match mode {
        EncodeMode::Mean => mu.data.clone(),
        EncodeMode::Sample(rng) => mu
            .data
            .iter()
            .zip(&logvar.data)
            .map(|(&m, &lv)| {
                let eps: f64 = rng.sample(StandardNormal);
                m + (lv * 0.5).exp() * eps
            })
            .collect(),
    };
    Ok((mu.data, logvar.data, z))
}

/// Decode a latent into CLIP_LEN frames of per-pixel values in [0,1].
pub fn decode(p: &MvaeParams, z: &[f64]) -> Result<Vec<Vec<f64>>> {
    if z.len() != p.cfg.latent {
        return Err(LearnError::LatentDimMismatch { want: p.cfg.latent, got: z.len() });
    }
    let zm = Mat::from_vec(1, z.len(), z.to_vec());
    let (recon, _) = decode_forward(p, &zm);
    Ok(detokenize(&p.cfg, &recon))
}

/// KL divergence to the standard normal from (mu, logvar) heads.
pub fn kl_term(mu: &[f64], logvar: &[f64]) -> f64 {
    0.5 * mu
        .iter()
        .zip(logvar)
        .map(|(&m, &lv)| m * m + lv.exp() - lv - 1.0)
        .sum::<f64>()
}

/// Mean squared error over every pixel of the clip.
pub fn recon_mse(recon: &Mat, target: &Mat) -> f64 {
    recon
        .data
        .iter()
        .zip(&target.data)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<f64>()
        / recon.data.len() as f64
}

/// Loss of one masked clip against its unmasked target, with the given
/// reparameterization noise (one value per latent dimension).
pub fn loss_with_eps(
    p: &MvaeParams,
    mc: &MaskedClip,
    target: &Clip,
    beta: f64,
    eps: &[f64],
) -> Result<MvaeLosses> {
    let (l, _, _) = loss_forward(p, mc, target, beta, eps)?;
    Ok(l)
}

fn loss_forward<'a>(
    p: &'a MvaeParams,
    mc: &MaskedClip,
    target: &Clip,
    beta: f64,
    eps: &[f64],
) -> Result<(MvaeLosses, (Mat, Mat, EncCache), (Mat, DecCache))> {
    assert!(beta >= 0.0);
    check_clip_shape(&p.cfg, &mc.clip)?;
    check_clip_shape(&p.cfg, target)?;
    assert_eq!(eps.len(), p.cfg.latent);
    let (mu, logvar, enc_cache) = encode_forward(p, tokenize_masked(&p.cfg, mc));
    let z = Mat::from_vec(
        1,
        p.cfg.latent,
        mu.data
            .iter()
            .zip(&logvar.data)
            .zip(eps)
            .map(|((&m, &lv), &e)| m + (lv * 0.5).exp() * e)
            .collect(),
    );
    let (recon, dec_cache) = decode_forward(p, &z);
    let target_tokens = tokenize(&p.cfg, target);
    let recon_loss = recon_mse(&recon, &target_tokens);
    let kl = kl_term(&mu.data, &logvar.data);
    let losses = MvaeLosses { recon: recon_loss, kl, total: recon_loss + beta * kl };
    Ok((losses, (mu, logvar, enc_cache), (target_tokens, dec_cache)))
}

/// Loss and parameter gradients for one clip.
pub fn loss_and_grads(
    p: &MvaeParams,
    mc: &MaskedClip,
    target: &Clip,
    beta: f64,
    eps: &[f64],
    grads: &mut MvaeParams,
) -> Result<MvaeLosses> {
    let (losses, (mu, logvar, enc_cache), (target_tokens, dec_cache)) =
        loss_forward(p, mc, target, beta, eps)?;
    let cfg = &p.cfg;
    let np = cfg.patches_per_frame();

    // d recon / d recon_tokens
    let n_el = dec_cache.recon.data.len() as f64;
    let mut drecon = Mat::zeros(dec_cache.recon.rows, dec_cache.recon.cols);
    for i in 0..drecon.data.len() {
        drecon.data[i] = 2.0 * (dec_cache.recon.data[i] - target_tokens.data[i]) / n_el;
    }

    // decoder backward
    let dlogits = sigmoid_backward(&dec_cache.recon, &drecon);
    let dnormed = p.out_proj.backward(&dec_cache.normed, &dlogits, &mut grads.out_proj);
    let mut dx = p.dec_norm.backward(&dec_cache.norm_cache, &dnormed, &mut grads.dec_norm);
    for (bi, b) in p.dec_blocks.iter().enumerate().rev() {
        let (input, cache) = &dec_cache.blocks[bi];
        let _ = input;
        dx = b.backward(cache, &dx, &mut grads.dec_blocks[bi]);
    }
    // dx is d loss / d d0; fan out to mask token, z projection and positions
    let dd0_sum = dx.col_sum();
    grads.mask_token.add_inplace(&dd0_sum);
    for row in 0..dx.rows {
        let (t, s) = (row / np, row % np);
        let dr = dx.row(row);
        for j in 0..cfg.dim {
            grads.pos_spatial.data[s * cfg.dim + j] += dr[j];
            grads.pos_temporal.data[t * cfg.dim + j] += dr[j];
        }
    }
    let dz = p.z_proj.backward(&dec_cache.z, &dd0_sum, &mut grads.z_proj);

    // reparameterization and KL into the heads
    let mut dmu = Mat::zeros(1, cfg.latent);
    let mut dlogvar = Mat::zeros(1, cfg.latent);
    for j in 0..cfg.latent {
        let lv = logvar.data[j];
        let sigma = (lv * 0.5).exp();
        dmu.data[j] = dz.data[j] + beta * mu.data[j];
        let mut dl = dz.data[j] * eps[j] * sigma * 0.5 + beta * 0.5 * (lv.exp() - 1.0);
        // clamped log-variance passes no gradient at the rails
        if enc_cache.logvar_raw.data[j].abs() >= LOGVAR_CLAMP {
            dl = 0.0;
        }
        dlogvar.data[j] = dl;
    }

    let mut dpooled = p.mu_head.backward(&enc_cache.pooled, &dmu, &mut grads.mu_head);
    dpooled.add_inplace(&p.logvar_head.backward(&enc_cache.pooled, &dlogvar, &mut grads.logvar_head));

    // mean-pool backward: every token row receives dpooled / n
    let n_tok = enc_cache.feat.rows as f64;
    let mut dfeat = Mat::zeros(enc_cache.feat.rows, cfg.dim);
    for row in 0..dfeat.rows {
        let dr = dfeat.row_mut(row);
        for j in 0..cfg.dim {
            dr[j] = dpooled.data[j] / n_tok;
        }
    }

    let mut dx = p.enc_norm.backward(&enc_cache.norm_cache, &dfeat, &mut grads.enc_norm);
    let _ = &enc_cache.norm_in;
    for (bi, b) in p.enc_blocks.iter().enumerate().rev() {
        let (input, cache) = &enc_cache.blocks[bi];
        let _ = input;
        dx = b.backward(cache, &dx, &mut grads.enc_blocks[bi]);
    }
    // position embeddings on the encoder side
    for row in 0..dx.rows {
        let (t, s) = (row / np, row % np);
        let dr = dx.row(row);
        for j in 0..cfg.dim {
            grads.pos_spatial.data[s * cfg.dim + j] += dr[j];
            grads.pos_temporal.data[t * cfg.dim + j] += dr[j];
        }
    }
    let _ = &enc_cache.embedded;
    p.patch_embed.backward(&enc_cache.tokens, &dx, &mut grads.patch_embed);

    Ok(losses)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MvaeTrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub mask_ratio: f64,
    pub seed: u64,
}

impl Default for MvaeTrainConfig {
    fn default() -> Self {
        MvaeTrainConfig { epochs: 200, batch: 16, lr: 1e-3, mask_ratio: 0.5, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub recon: f64,
    pub kl: f64,
    pub total: f64,
}

/// Train on a clip dataset; masks are re-sampled every epoch. Gradients of a
/// batch are reduced in fixed clip order, so results do not depend on the
/// thread count.
pub fn train_mvae(
    params: &mut MvaeParams,
    dataset: &[Clip],
    tc: &MvaeTrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<Vec<EpochLog>> {
    if dataset.is_empty() {
        return Err(LearnError::EmptyDataset);
    }
    for clip in dataset {
        check_clip_shape(&params.cfg, clip)?;
    }
    let beta = params.cfg.beta;
    let latent = params.cfg.latent;
    let mut opt = Adam::new(tc.lr);
    let mut order_rng = ChaCha8Rng::seed_from_u64(tc.seed ^ 0x5eed_0001);
    let mut logs = Vec::with_capacity(tc.epochs);

    for epoch in 0..tc.epochs {
        // seeded shuffle of the clip order
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        for i in (1..order.len()).rev() {
            let j = order_rng.gen_range(0..=i);
            order.swap(i, j);
        }

        let mut sums = (0.0, 0.0, 0.0);
        for chunk in order.chunks(tc.batch.max(1)) {
            // per-clip rng streams derived from (seed, epoch, clip index)
            let jobs: Vec<(usize, u64)> = chunk
                .iter()
                .map(|&ci| (ci, tc.seed ^ (epoch as u64).wrapping_mul(0x9e37_79b9) ^ ((ci as u64) << 32)))
                .collect();
            let results: Vec<Result<(MvaeLosses, MvaeParams)>> = if school_nn::thread_limit() == 1 {
                jobs.iter()
                    .map(|&(ci, s)| clip_pass(params, &dataset[ci], tc, beta, latent, s))
                    .collect()
            } else {
                jobs.par_iter()
                    .map(|&(ci, s)| clip_pass(params, &dataset[ci], tc, beta, latent, s))
                    .collect()
            };

            let mut batch_grads = params.zeros_like();
            let mut count = 0.0;
            for r in results {
                let (losses, g) = r?;
                batch_grads.accumulate(&g);
                sums.0 += losses.recon;
                sums.1 += losses.kl;
                sums.2 += losses.total;
                count += 1.0;
            }
            batch_grads.scale(1.0 / count);
            opt.step(params, &batch_grads);
        }

        let n = dataset.len() as f64;
        let log = EpochLog { epoch, recon: sums.0 / n, kl: sums.1 / n, total: sums.2 / n };
        on_epoch(&log);
        logs.push(log);
    }
    Ok(logs)
}

fn clip_pass(
    params: &MvaeParams,
    clip: &Clip,
    tc: &MvaeTrainConfig,
    beta: f64,
    latent: usize,
    stream_seed: u64,
) -> Result<(MvaeLosses, MvaeParams)> {
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed);
    let mc = mask_clip(clip, params.cfg.patch, tc.mask_ratio, &mut rng)?;
    let eps: Vec<f64> = (0..latent).map(|_| rng.sample(StandardNormal)).collect();
    let mut grads = params.zeros_like();
    let losses = loss_and_grads(params, &mc, clip, beta, &eps, &mut grads)?;
    Ok((losses, grads))
}

/// Mean-mode encoding of unmasked clips, order preserved.
pub fn encode_stream(params: &MvaeParams, clips: &[Clip]) -> Result<Vec<Latent>> {
    let results: Vec<Result<Latent>> = if school_nn::thread_limit() == 1 {
        clips.iter().map(|c| encode_one(params, c)).collect()
    } else {
        clips.par_iter().map(|c| encode_one(params, c)).collect()
    };
    results.into_iter().collect()
}

fn encode_one(params: &MvaeParams, clip: &Clip) -> Result<Latent> {
    check_clip_shape(&params.cfg, clip)?;
    let (mu, _, _) = encode_forward(params, tokenize(&params.cfg, clip));
    Ok(mu.data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use school_core::silhouette::SilhouetteFrame;
    use school_nn::check_grads;

    fn tiny_cfg() -> MvaeConfig {
        MvaeConfig {
            frame_w: 8,
            frame_h: 8,
            patch: 4,
            dim: 16,
            enc_layers: 1,
            dec_layers: 1,
            heads: 2,
            mlp_hidden: 32,
            latent: 4,
            beta: 0.5,
        }
    }

    fn synthetic_clip(cfg: &MvaeConfig, seed: u64) -> Clip {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frames = (0..CLIP_LEN)
            .map(|t| {
                let mut f = SilhouetteFrame::zeros(cfg.frame_w, cfg.frame_h);
                // a couple of moving blobs
                for b in 0..3 {
                    let x = (rng.gen_range(0..cfg.frame_w) + t + b) % cfg.frame_w;
                    let y = (rng.gen_range(0..cfg.frame_h) + t) % cfg.frame_h;
                    f.bits[y * cfg.frame_w + x] = 1;
                }
                f
            })
            .collect();
        Clip::new(frames)
    }

    #[test]
    fn encode_mean_mode_is_deterministic_and_sized() {
        let cfg = tiny_cfg();
        let p = MvaeParams::new(cfg, 1);
        let clip = synthetic_clip(&cfg, 3);
        let mc = mask_clip(&clip, cfg.patch, 0.5, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let (mu1, lv1, z1) = encode(&p, &mc, EncodeMode::Mean).unwrap();
        let (mu2, _, z2) = encode(&p, &mc, EncodeMode::Mean).unwrap();
        assert_eq!(mu1, mu2);
        assert_eq!(z1, z2);
        assert_eq!(z1, mu1);
        assert_eq!(mu1.len(), cfg.latent);
        assert_eq!(lv1.len(), cfg.latent);
    }

    #[test]
    fn sample_mode_degenerates_to_mean_at_tiny_variance() {
        let cfg = tiny_cfg();
        let mut p = MvaeParams::new(cfg, 1);
        // force the log-variance head to a huge negative bias
        p.logvar_head.w.zero_fill();
        p.logvar_head.b.data.iter_mut().for_each(|v| *v = -1e9);
        let clip = synthetic_clip(&cfg, 3);
        let mc = mask_clip(&clip, cfg.patch, 0.5, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (mu, _, z) = encode(&p, &mc, EncodeMode::Sample(&mut rng)).unwrap();
        for (a, b) in z.iter().zip(&mu) {
            assert!((a - b).abs() < 1e-5, "z {a} vs mu {b}");
        }
    }

    #[test]
    fn decode_shape_and_range() {
        let cfg = tiny_cfg();
        let p = MvaeParams::new(cfg, 2);
        let frames = decode(&p, &[0.0; 4]).unwrap();
        assert_eq!(frames.len(), CLIP_LEN);
        assert_eq!(frames[0].len(), 64);
        for f in &frames {
            for &v in f {
                assert!((0.0..=1.0).contains(&v));
            }
        }
        assert!(matches!(decode(&p, &[0.0; 7]), Err(LearnError::LatentDimMismatch { .. })));
    }

    #[test]
    fn kl_spot_values() {
        assert!(kl_term(&[0.0], &[0.0]).abs() < 1e-15);
        // J=1, mu=1, sigma=1 -> 0.5
        assert!((kl_term(&[1.0], &[0.0]) - 0.5).abs() < 1e-15);
        // KL is non-negative over random draws
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            let mu: Vec<f64> = (0..5).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let lv: Vec<f64> = (0..5).map(|_| rng.gen_range(-4.0..4.0)).collect();
            assert!(kl_term(&mu, &lv) >= 0.0);
        }
    }

    #[test]
    fn loss_additivity() {
        let cfg = tiny_cfg();
        let p = MvaeParams::new(cfg, 4);
        let clip = synthetic_clip(&cfg, 5);
        let mc = mask_clip(&clip, cfg.patch, 0.5, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let eps = vec![0.1, -0.3, 0.7, 0.2];
        let l = loss_with_eps(&p, &mc, &clip, 0.5, &eps).unwrap();
        assert_eq!(l.total, l.recon + 0.5 * l.kl);
        assert!(l.recon >= 0.0 && l.kl >= 0.0);
    }

    #[test]
    fn miniature_gradcheck() {
        let cfg = tiny_cfg();
        let mut p = MvaeParams::new(cfg, 7);
        let clip = synthetic_clip(&cfg, 11);
        let mc = mask_clip(&clip, cfg.patch, 0.5, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let eps: Vec<f64> = vec![0.3, -0.5, 0.9, -0.1];

        let mut grads = p.zeros_like();
        loss_and_grads(&p, &mc, &clip, 0.5, &eps, &mut grads).unwrap();

        // h = 1e-5: at 1e-4 the central-difference truncation term (h^2/6 f''')
        // exceeds the 1e-4 relative tolerance at attention-softmax curvature;
        // the FD error shrinks quadratically in h toward the analytic value
        let loss = |q: &MvaeParams| loss_with_eps(q, &mc, &clip, 0.5, &eps).unwrap().total;
        let report = check_grads(&mut p, &grads, loss, 1e-5, 1e-4);
        assert!(
            report.failures.is_empty(),
            "{} of {} failed, worst {:?}",
            report.failures.len(),
            report.checked,
            report.failures.first()
        );
    }

    #[test]
    fn training_halves_reconstruction_loss() {
        let cfg = tiny_cfg();
        let mut p = MvaeParams::new(cfg, 0);
        let dataset: Vec<Clip> = (0..50).map(|i| synthetic_clip(&cfg, i)).collect();
        let tc = MvaeTrainConfig { epochs: 200, batch: 16, lr: 1e-3, mask_ratio: 0.5, seed: 0 };
        let logs = train_mvae(&mut p, &dataset, &tc, |_| {}).unwrap();
        let initial = logs.first().unwrap().recon;
        let final_ = logs.last().unwrap().recon;
        assert!(final_ <= 0.5 * initial, "recon {initial} -> {final_}");
        for l in &logs {
            assert!(l.kl >= 0.0);
        }
    }

    #[test]
    fn training_is_deterministic() {
        school_nn::set_thread_limit(1);
        let cfg = tiny_cfg();
        let dataset: Vec<Clip> = (0..8).map(|i| synthetic_clip(&cfg, i)).collect();
        let tc = MvaeTrainConfig { epochs: 5, batch: 4, lr: 1e-3, mask_ratio: 0.5, seed: 3 };
        let run = || {
            let mut p = MvaeParams::new(cfg, 0);
            let logs = train_mvae(&mut p, &dataset, &tc, |_| {}).unwrap();
            logs.last().unwrap().total
        };
        let a = run();
        let b = run();
        school_nn::set_thread_limit(0);
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }

    #[test]
    fn encode_stream_preserves_order_and_length() {
        let cfg = tiny_cfg();
        let p = MvaeParams::new(cfg, 1);
        assert!(encode_stream(&p, &[]).unwrap().is_empty());
        let clips: Vec<Clip> = (0..4).map(|i| synthetic_clip(&cfg, i)).collect();
        let zs = encode_stream(&p, &clips).unwrap();
        assert_eq!(zs.len(), 4);
        // identical clips map to identical latents
        let twice = encode_stream(&p, &[clips[0].clone(), clips[0].clone()]).unwrap();
        assert_eq!(twice[0], twice[1]);
    }

    #[test]
    fn empty_dataset_rejected() {
        let cfg = tiny_cfg();
        let mut p = MvaeParams::new(cfg, 0);
        let tc = MvaeTrainConfig::default();
        assert!(matches!(train_mvae(&mut p, &[], &tc, |_| {}), Err(LearnError::EmptyDataset)));
    }
}
