//! The closed training loop: rollouts, discriminator updates on replayed
//! policy transitions vs. reference transitions, style-reward refresh, GAE
//! and PPO. Trainer state exports to flat f32 tensors so checkpoints can
//! resume bit-for-bit (the live state is refreshed from its own export).

use crate::cluster::ClusterModel;
use crate::discriminator::{
    Discriminator, PairSource, TransitionPair, batch_features, update_discriminator,
};
use crate::error::{LearnError, Result};
use crate::metrics::js_divergence;
use crate::mvae::{Latent, MvaeParams};
use crate::policy::{
    ACTION_DIM, PolicyParams, PpoBatch, PpoConfig, ValueParams, compute_gae, ppo_update,
};
use crate::rollout::{
    RolloutBatch, RolloutContext, collect_rollouts, observation_dim, refresh_style_rewards,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use school_core::camera::CameraSpec;
use school_core::rewards::{AggregationParams, Task};
use school_core::silhouette::BodyProxy;
use school_core::sim::{
    AgentState, EnvConfig, EnvState, Role, assign_roles, init_environment,
};
use school_core::vec::{UnitQuat, Vec3};
use school_nn::{Adam, Mat, ParamStruct};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<TransitionPair>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer { capacity: capacity.max(1), items: Vec::new(), next: 0 }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, pair: TransitionPair) {
        if self.items.len() < self.capacity {
            self.items.push(pair);
        } else {
            self.items[self.next] = pair;
            self.next = (self.next + 1) % self.capacity;
        }
    }

    /// Uniform sample with replacement.
    pub fn sample<'a>(&'a self, n: usize, rng: &mut ChaCha8Rng) -> Vec<&'a TransitionPair> {
        (0..n).map(|_| &self.items[rng.gen_range(0..self.items.len())]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CbilConfig {
    pub env: EnvConfig,
    pub camera: CameraSpec,
    pub body: BodyProxy,
    pub task: Task,
    pub target_speed: f64,
    pub agg: AggregationParams,
    pub policy_hidden: Vec<usize>,
    pub value_hidden: Vec<usize>,
    pub log_std: Vec<f64>,
    pub k_neighbors: usize,
    pub lr_policy: f64,
    pub lr_value: f64,
    pub lr_disc: f64,
    pub ppo: PpoConfig,
    pub gamma: f64,
    pub lambda: f64,
    pub horizon: usize,
    pub total_env_steps: usize,
    pub w_gp: f64,
    pub disc_updates: usize,
    pub disc_batch: usize,
    pub replay_capacity: usize,
    pub no_clustering: bool,
    pub dominant_fraction: f64,
    pub seed: u64,
}

impl Default for CbilConfig {
    fn default() -> Self {
        CbilConfig {
            env: EnvConfig::default(),
            camera: CameraSpec::default(),
            body: BodyProxy::default(),
            task: Task::CirclingCw,
            target_speed: 1.0,
            agg: AggregationParams::default(),
            policy_hidden: vec![1024, 1024, 1024, 512],
            value_hidden: vec![128, 128, 128, 128],
            log_std: vec![-2.0, -1.6, -2.3],
            k_neighbors: 8,
            lr_policy: 3e-4,
            lr_value: 3e-4,
            lr_disc: 2e-4,
            ppo: PpoConfig::default(),
            gamma: 0.99,
            lambda: 0.99,
            horizon: 500,
            total_env_steps: 400_000,
            w_gp: 5.0,
            disc_updates: 8,
            disc_batch: 256,
            replay_capacity: 1_000_000,
            no_clustering: false,
            dominant_fraction: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterLog {
    pub iteration: usize,
    pub env_steps: usize,
    pub mean_total: f64,
    pub mean_style: f64,
    pub mean_bio: f64,
    pub mean_task: f64,
    pub disc_loss: f64,
    pub gp: f64,
    pub disc_mean_ref_score: f64,
    pub disc_mean_policy_score: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub mean_episode_len: f64,
    pub js_to_reference: f64,
    pub reward_range_violations: usize,
    pub reward_identity_violations: usize,
    pub ratio_band_violations: usize,
}

pub struct CbilTrainer {
    pub cfg: CbilConfig,
    pub mvae: MvaeParams,
    pub style_model: ClusterModel,
    pub eval_model: ClusterModel,
    pub reference_pairs: Vec<TransitionPair>,
    pub reference_latents: Vec<Latent>,
    pub policy: PolicyParams,
    pub value: ValueParams,
    pub disc: Discriminator,
    p_opt: Adam,
    v_opt: Adam,
    d_opt: Adam,
    pub env: EnvState,
    pub replay: ReplayBuffer,
    master_rng: ChaCha8Rng,
    pub iteration: usize,
    pub env_steps_done: usize,
    pub logs: Vec<IterLog>,
}

impl CbilTrainer {
    pub fn new(
        cfg: CbilConfig,
        mvae: MvaeParams,
        cluster_model: ClusterModel,
        reference_pairs: Vec<TransitionPair>,
    ) -> Result<Self> {
        if reference_pairs.is_empty() {
            return Err(LearnError::MissingArtifact("reference transition pairs".into()));
        }
        if cluster_model.anchors.is_empty() {
            return Err(LearnError::MissingArtifact("cluster model anchors".into()));
        }
        let style_model = if cfg.no_clustering {
            ClusterModel::uniform(cluster_model.anchors.clone())
        } else {
            cluster_model.clone()
        };
        let reference_latents = cluster_model.anchors.clone();
        let obs_dim = observation_dim(cfg.k_neighbors);
        let policy =
            PolicyParams::new(obs_dim, &cfg.policy_hidden, cfg.log_std.clone(), cfg.seed ^ 0x11);
        let value = ValueParams::new(obs_dim, &cfg.value_hidden, cfg.seed ^ 0x22)
            .with_scale(1.0 / (1.0 - cfg.gamma).max(1e-6));
        let mut disc_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x33);
        let disc =
            Discriminator::new(&Discriminator::default_dims(mvae.cfg.latent), true, &mut disc_rng);
        let mut env = init_environment(&cfg.env, cfg.seed ^ 0x44)?;
        if cfg.task == Task::Chasing {
            assign_roles(&mut env, cfg.dominant_fraction);
        }
        Ok(CbilTrainer {
            p_opt: Adam::new(cfg.lr_policy),
            v_opt: Adam::new(cfg.lr_value),
            d_opt: Adam::new(cfg.lr_disc),
            replay: ReplayBuffer::new(cfg.replay_capacity),
            master_rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            iteration: 0,
            env_steps_done: 0,
            logs: Vec::new(),
            eval_model: cluster_model,
            style_model,
            reference_pairs,
            reference_latents,
            policy,
            value,
            disc,
            env,
            mvae,
            cfg,
        })
    }

    pub fn finished(&self) -> bool {
        self.env_steps_done >= self.cfg.total_env_steps
    }

    /// One training iteration: collect, update the discriminator, refresh
    /// style rewards, GAE, PPO.
    pub fn iterate(&mut self) -> Result<IterLog> {
        // fixed derivation order keeps the run reproducible
        let mut action_rng = ChaCha8Rng::seed_from_u64(self.master_rng.gen());
        let mut env_rng = ChaCha8Rng::seed_from_u64(self.master_rng.gen());
        let mut disc_rng = ChaCha8Rng::seed_from_u64(self.master_rng.gen());
        let mut ppo_rng = ChaCha8Rng::seed_from_u64(self.master_rng.gen());

        let ctx = RolloutContext {
            env_cfg: &self.cfg.env,
            camera: &self.cfg.camera,
            body: &self.cfg.body,
            task: self.cfg.task,
            target_speed: self.cfg.target_speed,
            agg: &self.cfg.agg,
            mvae: &self.mvae,
            disc: &self.disc,
            style_model: &self.style_model,
            k_neighbors: self.cfg.k_neighbors,
            deterministic_actions: false,
        };
        let mut batch = collect_rollouts(
            &mut self.env,
            &self.policy,
            &self.value,
            &ctx,
            self.cfg.horizon,
            &mut action_rng,
            &mut env_rng,
        )?;

        for pair in &batch.pairs {
            self.replay.push(pair.clone());
        }

        // discriminator updates from replayed policy pairs vs reference pairs
        let mut disc_loss = 0.0;
        let mut gp = 0.0;
        let mut ref_score = 0.0;
        let mut pol_score = 0.0;
        let mut disc_updates_done = 0;
        if !self.replay.is_empty() {
            for _ in 0..self.cfg.disc_updates {
                let pol = self.replay.sample(self.cfg.disc_batch, &mut disc_rng);
                let refs: Vec<&TransitionPair> = (0..self.cfg.disc_batch)
                    .map(|_| &self.reference_pairs[disc_rng.gen_range(0..self.reference_pairs.len())])
                    .collect();
                let ref_x = batch_features(&refs);
                let pol_x = batch_features(&pol);
                let parts =
                    update_discriminator(&mut self.disc, &mut self.d_opt, &ref_x, &pol_x, self.cfg.w_gp);
                disc_loss += parts.total;
                gp += parts.gp;
                ref_score += parts.mean_ref_score;
                pol_score += parts.mean_policy_score;
                disc_updates_done += 1;
            }
        }
        if disc_updates_done > 0 {
            disc_loss /= disc_updates_done as f64;
            gp /= disc_updates_done as f64;
            ref_score /= disc_updates_done as f64;
            pol_score /= disc_updates_done as f64;
        }

        // style rewards from the updated discriminator
        let roles: Vec<Role> = self.env.agents.iter().map(|a| a.role).collect();
        refresh_style_rewards(
            &mut batch,
            &self.disc,
            &self.style_model,
            self.cfg.task,
            &self.cfg.env.cage,
            &self.cfg.agg,
            &roles,
        );

        // per-agent GAE, flattened into one PPO batch
        let obs_dim = observation_dim(self.cfg.k_neighbors);
        let n_records = batch.record_count();
        let mut obs = Mat::zeros(n_records, obs_dim);
        let mut actions = Mat::zeros(n_records, ACTION_DIM);
        let mut old_log_probs = Vec::with_capacity(n_records);
        let mut advantages = Vec::with_capacity(n_records);
        let mut returns = Vec::with_capacity(n_records);
        let mut row = 0;
        let mut episodes = 0usize;
        let mut stats = RewardStats::default();
        for (agent, records) in batch.per_agent.iter().enumerate() {
            if records.is_empty() {
                continue;
            }
            let rewards: Vec<f64> = records.iter().map(|r| r.reward.total).collect();
            let mut values: Vec<f64> = records.iter().map(|r| r.value).collect();
            values.push(if records.last().unwrap().done {
                0.0
            } else {
                batch.final_values[agent].unwrap_or(0.0)
            });
            let dones: Vec<bool> = records.iter().map(|r| r.done).collect();
            let (adv, ret) = compute_gae(&rewards, &values, &dones, self.cfg.gamma, self.cfg.lambda)?;
            episodes += dones.iter().filter(|&&d| d).count();
            if !records.last().unwrap().done {
                episodes += 1;
            }
            for (k, rec) in records.iter().enumerate() {
                obs.row_mut(row).copy_from_slice(&rec.obs);
                actions.row_mut(row).copy_from_slice(&rec.action);
                old_log_probs.push(rec.log_prob);
                advantages.push(adv[k]);
                returns.push(ret[k]);
                stats.absorb(&rec.reward);
                row += 1;
            }
        }

        let ppo_batch = PpoBatch { obs, actions, old_log_probs, advantages, returns };
        let ppo_stats = ppo_update(
            &mut self.policy,
            &mut self.value,
            &mut self.p_opt,
            &mut self.v_opt,
            &ppo_batch,
            &self.cfg.ppo,
            &mut ppo_rng,
        );

        let js = if batch.latents.is_empty() {
            f64::NAN
        } else {
            js_divergence(&batch.latents, &self.reference_latents, &self.eval_model)?
        };

        self.env_steps_done += batch.env_steps;
        let log = IterLog {
            iteration: self.iteration,
            env_steps: self.env_steps_done,
            mean_total: stats.mean_total(),
            mean_style: stats.mean_style(),
            mean_bio: stats.mean_bio(),
            mean_task: stats.mean_task(),
            disc_loss,
            gp,
            disc_mean_ref_score: ref_score,
            disc_mean_policy_score: pol_score,
            policy_loss: ppo_stats.policy_loss,
            value_loss: ppo_stats.value_loss,
            mean_episode_len: n_records as f64 / episodes.max(1) as f64,
            js_to_reference: js,
            reward_range_violations: stats.range_violations,
            reward_identity_violations: stats.identity_violations,
            ratio_band_violations: ppo_stats.ratio_band_violations,
        };
        self.iteration += 1;
        self.logs.push(log);
        Ok(log)
    }

    /// Run until the configured environment-step budget is exhausted.
    pub fn run(&mut self, mut on_iter: impl FnMut(&IterLog)) -> Result<()> {
        while !self.finished() {
            let log = self.iterate()?;
            on_iter(&log);
        }
        Ok(())
    }

    /// A rollout batch under the current (or a random baseline) policy, for
    /// evaluation; does not touch the training environment.
    pub fn evaluate_rollout(
        &self,
        policy: &PolicyParams,
        horizon: usize,
        seed: u64,
    ) -> Result<RolloutBatch> {
        let ctx = RolloutContext {
            env_cfg: &self.cfg.env,
            camera: &self.cfg.camera,
            body: &self.cfg.body,
            task: self.cfg.task,
            target_speed: self.cfg.target_speed,
            agg: &self.cfg.agg,
            mvae: &self.mvae,
            disc: &self.disc,
            style_model: &self.style_model,
            k_neighbors: self.cfg.k_neighbors,
            deterministic_actions: false,
        };
        let mut env = init_environment(&self.cfg.env, seed ^ 0x77)?;
        if self.cfg.task == Task::Chasing {
            assign_roles(&mut env, self.cfg.dominant_fraction);
        }
        let mut action_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x88);
        let mut env_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x99);
        collect_rollouts(&mut env, policy, &self.value, &ctx, horizon, &mut action_rng, &mut env_rng)
    }

    // ---- checkpoint state ----

    pub fn rng_state(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(48);
        out.extend_from_slice(&self.master_rng.get_seed());
        out.extend_from_slice(&self.master_rng.get_word_pos().to_le_bytes());
        out
    }

    pub fn set_rng_state(&mut self, bytes: &[u8]) -> Result<()> {
        if bytes.len() != 48 {
            return Err(LearnError::MissingArtifact("rng state (48 bytes)".into()));
        }
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&bytes[..32]);
        let mut pos = [0u8; 16];
        pos.copy_from_slice(&bytes[32..]);
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_word_pos(u128::from_le_bytes(pos));
        self.master_rng = rng;
        Ok(())
    }

    /// Full mutable state as named f32 tensors (checkpoint payload).
    pub fn export_tensors(&self) -> Vec<(String, Vec<usize>, Vec<f32>)> {
        let mut out: Vec<(String, Vec<usize>, Vec<f32>)> = Vec::new();
        let net = |prefix: &str, p: &dyn ParamStruct, out: &mut Vec<(String, Vec<usize>, Vec<f32>)>| {
            for (name, m) in p.tensors() {
                out.push((
                    format!("{prefix}.{name}"),
                    vec![m.rows, m.cols],
                    m.data.iter().map(|&v| v as f32).collect(),
                ));
            }
        };
        net("policy", &self.policy, &mut out);
        net("value", &self.value, &mut out);
        net("disc", &self.disc, &mut out);

        for (tag, opt) in [("policy", &self.p_opt), ("value", &self.v_opt), ("disc", &self.d_opt)] {
            let (m, v, t) = opt.export_state();
            let flat_m: Vec<f32> = m.iter().flatten().map(|&x| x as f32).collect();
            let flat_v: Vec<f32> = v.iter().flatten().map(|&x| x as f32).collect();
            out.push((format!("opt_{tag}.m"), vec![flat_m.len()], flat_m));
            out.push((format!("opt_{tag}.v"), vec![flat_v.len()], flat_v));
            out.push((format!("opt_{tag}.t"), vec![1], vec![t as f32]));
        }

        let n = self.env.agents.len();
        let mut agents = Vec::with_capacity(n * 13);
        for a in &self.env.agents {
            agents.extend_from_slice(&[
                a.position.x as f32,
                a.position.y as f32,
                a.position.z as f32,
                a.forward.x as f32,
                a.forward.y as f32,
                a.forward.z as f32,
                a.rotation.w as f32,
                a.rotation.x as f32,
                a.rotation.y as f32,
                a.rotation.z as f32,
                a.speed as f32,
                match a.role {
                    Role::Normal => 0.0,
                    Role::Dominant => 1.0,
                    Role::Subordinate => 2.0,
                },
                if a.alive { 1.0 } else { 0.0 },
            ]);
        }
        out.push(("env.agents".into(), vec![n, 13], agents));
        out.push((
            "env.timers".into(),
            vec![n],
            self.env.respawn_timers.iter().map(|&t| t as f32).collect(),
        ));
        let mut food = Vec::with_capacity(self.env.food.len() * 3);
        for f in &self.env.food {
            food.extend_from_slice(&[f.x as f32, f.y as f32, f.z as f32]);
        }
        out.push(("env.food".into(), vec![self.env.food.len(), 3], food));
        out.push(("env.time_step".into(), vec![1], vec![self.env.time_step as f32]));

        let dim = 2 * self.mvae.cfg.latent;
        let mut replay = Vec::with_capacity(self.replay.items.len() * dim);
        for p in &self.replay.items {
            replay.extend(p.z.iter().map(|&v| v as f32));
            replay.extend(p.z_next.iter().map(|&v| v as f32));
        }
        out.push(("replay.pairs".into(), vec![self.replay.items.len(), dim], replay));
        out.push(("replay.next".into(), vec![1], vec![self.replay.next as f32]));
        out.push(("progress".into(), vec![2], vec![self.iteration as f32, self.env_steps_done as f32]));
        out
    }

    /// Restore the state produced by `export_tensors`.
    pub fn import_tensors(&mut self, tensors: &[(String, Vec<usize>, Vec<f32>)]) -> Result<()> {
        let lookup = |name: &str| -> Result<&(String, Vec<usize>, Vec<f32>)> {
            tensors
                .iter()
                .find(|(n, _, _)| n == name)
                .ok_or_else(|| LearnError::MissingArtifact(format!("checkpoint tensor {name}")))
        };
        let load_net = |prefix: &str, p: &mut dyn ParamStruct| -> Result<()> {
            for (name, m) in p.tensors_mut() {
                let key = format!("{prefix}.{name}");
                let (_, dims, data) = lookup(&key)?;
                if dims != &vec![m.rows, m.cols] || data.len() != m.data.len() {
                    return Err(LearnError::MissingArtifact(format!("{key} has wrong shape")));
                }
                for (dst, &src) in m.data.iter_mut().zip(data) {
                    *dst = src as f64;
                }
            }
            Ok(())
        };
        load_net("policy", &mut self.policy)?;
        load_net("value", &mut self.value)?;
        load_net("disc", &mut self.disc)?;

        for (tag, opt, shapes) in [
            ("policy", &mut self.p_opt, self.policy.tensors().iter().map(|(_, m)| m.data.len()).collect::<Vec<_>>()),
            ("value", &mut self.v_opt, self.value.tensors().iter().map(|(_, m)| m.data.len()).collect::<Vec<_>>()),
            ("disc", &mut self.d_opt, self.disc.tensors().iter().map(|(_, m)| m.data.len()).collect::<Vec<_>>()),
        ] {
            let (_, _, flat_m) = lookup(&format!("opt_{tag}.m"))?;
            let (_, _, flat_v) = lookup(&format!("opt_{tag}.v"))?;
            let (_, _, t) = lookup(&format!("opt_{tag}.t"))?;
            let mut m = Vec::new();
            let mut v = Vec::new();
            let mut off = 0;
            for &len in &shapes {
                m.push(flat_m[off..off + len].iter().map(|&x| x as f64).collect());
                v.push(flat_v[off..off + len].iter().map(|&x| x as f64).collect());
                off += len;
            }
            opt.import_state(m, v, t[0] as u64);
        }

        let (_, dims, agents) = lookup("env.agents")?;
        let n = dims[0];
        let mut new_agents = Vec::with_capacity(n);
        for i in 0..n {
            let a = &agents[i * 13..(i + 1) * 13];
            let rotation = UnitQuat {
                w: a[6] as f64,
                x: a[7] as f64,
                y: a[8] as f64,
                z: a[9] as f64,
            }
            .renormalized();
            new_agents.push(AgentState {
                position: Vec3::new(a[0] as f64, a[1] as f64, a[2] as f64),
                forward: Vec3::new(a[3] as f64, a[4] as f64, a[5] as f64)
                    .normalized()
                    .unwrap_or(school_core::vec::FORWARD),
                rotation,
                speed: a[10] as f64,
                role: match a[11] as i64 {
                    1 => Role::Dominant,
                    2 => Role::Subordinate,
                    _ => Role::Normal,
                },
                alive: a[12] != 0.0,
            });
        }
        self.env.agents = new_agents;
        let (_, _, timers) = lookup("env.timers")?;
        self.env.respawn_timers = timers.iter().map(|&t| t as u32).collect();
        let (_, dims, food) = lookup("env.food")?;
        self.env.food = (0..dims[0])
            .map(|i| Vec3::new(food[i * 3] as f64, food[i * 3 + 1] as f64, food[i * 3 + 2] as f64))
            .collect();
        let (_, _, ts) = lookup("env.time_step")?;
        self.env.time_step = ts[0] as u64;

        let (_, dims, replay) = lookup("replay.pairs")?;
        let (rows, dim) = (dims[0], dims[1]);
        let j = dim / 2;
        self.replay = ReplayBuffer::new(self.cfg.replay_capacity);
        for i in 0..rows {
            let row = &replay[i * dim..(i + 1) * dim];
            self.replay.items.push(TransitionPair {
                z: row[..j].iter().map(|&v| v as f64).collect(),
                z_next: row[j..].iter().map(|&v| v as f64).collect(),
                source: PairSource::Policy,
            });
        }
        let (_, _, next) = lookup("replay.next")?;
        self.replay.next = next[0] as usize;
        let (_, _, prog) = lookup("progress")?;
        self.iteration = prog[0] as usize;
        self.env_steps_done = prog[1] as usize;
        Ok(())
    }

    /// Round the live state through its own export so that continuing in
    /// process matches resuming from the written checkpoint bit for bit.
    pub fn refresh_from_own_export(&mut self) -> Result<()> {
        let tensors = self.export_tensors();
        self.import_tensors(&tensors)
    }
}

#[derive(Default)]
struct RewardStats {
    n: usize,
    sum_total: f64,
    sum_style: f64,
    sum_bio: f64,
    sum_task: f64,
    range_violations: usize,
    identity_violations: usize,
}

impl RewardStats {
    fn absorb(&mut self, r: &school_core::rewards::RewardBreakdown) {
        self.n += 1;
        self.sum_total += r.total;
        self.sum_style += r.r_style;
        self.sum_bio += r.r_bio;
        self.sum_task += r.r_task;
        if !(0.0..=1.0).contains(&r.total) {
            self.range_violations += 1;
        }
        if (r.total - (0.4 * r.r_style + 0.1 * r.r_bio + 0.5 * r.r_task)).abs() > 1e-9 {
            self.identity_violations += 1;
        }
    }
    fn mean_total(&self) -> f64 {
        self.sum_total / self.n.max(1) as f64
    }
    fn mean_style(&self) -> f64 {
        self.sum_style / self.n.max(1) as f64
    }
    fn mean_bio(&self) -> f64 {
        self.sum_bio / self.n.max(1) as f64
    }
    fn mean_task(&self) -> f64 {
        self.sum_task / self.n.max(1) as f64
    }
}
