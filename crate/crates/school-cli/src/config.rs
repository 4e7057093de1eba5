//! Engine configuration: one strict TOML tree covering every stage. Unknown
//! keys are rejected, and the raw file text is carried as the byte-exact
//! echo embedded in every artifact.

use crate::error::{CliError, Result};
use school_core::camera::CameraSpec;
use school_core::rewards::{AggregationParams, Task};
use school_core::silhouette::BodyProxy;
use school_core::sim::{CageSpec, EnvConfig, Limits, Termination};
use school_core::vec::Vec3;
use school_learn::cluster::{ClusterBuildConfig, ReduceMethod};
use school_learn::mvae::{MvaeConfig, MvaeTrainConfig};
use school_learn::policy::PpoConfig;
use school_learn::trainer::CbilConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;

fn default_threads() -> usize {
    0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    pub seed: u64,
    /// 0 = use all cores; 1 = fully single-threaded (reference semantics).
    #[serde(default = "default_threads")]
    pub threads: usize,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub camera: CameraSection,
    #[serde(default)]
    pub observation: ObservationSection,
    #[serde(default)]
    pub mvae: MvaeSection,
    #[serde(default)]
    pub cluster: ClusterSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub rewards: RewardsSection,
    /// Raw file bytes; byte-for-byte echo for artifacts.
    #[serde(skip)]
    pub echo: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub agent_count: usize,
    pub cage: CageSpec,
    pub dt: f64,
    pub limits: Limits,
    pub body_radius: f64,
    pub min_separation: f64,
    pub spawn_margin: f64,
    pub termination: Termination,
    pub respawn_cooldown: u32,
    pub feed_epsilon: f64,
    pub dominant_fraction: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        let e = EnvConfig::default();
        SimSection {
            agent_count: e.agent_count,
            cage: e.cage,
            dt: e.dt,
            limits: e.limits,
            body_radius: e.body_radius,
            min_separation: e.min_separation,
            spawn_margin: e.spawn_margin,
            termination: e.termination,
            respawn_cooldown: e.respawn_cooldown,
            feed_epsilon: e.feed_epsilon,
            dominant_fraction: 0.1,
        }
    }
}

impl SimSection {
    pub fn to_env_config(&self) -> EnvConfig {
        EnvConfig {
            agent_count: self.agent_count,
            cage: self.cage,
            dt: self.dt,
            limits: self.limits,
            body_radius: self.body_radius,
            min_separation: self.min_separation,
            spawn_margin: self.spawn_margin,
            termination: self.termination,
            respawn_cooldown: self.respawn_cooldown,
            feed_epsilon: self.feed_epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraSection {
    pub position: [f64; 3],
    pub look_at: [f64; 3],
    pub up: [f64; 3],
    pub vertical_fov_deg: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for CameraSection {
    fn default() -> Self {
        let c = CameraSpec::default();
        CameraSection {
            position: [c.position.x, c.position.y, c.position.z],
            look_at: [c.look_at.x, c.look_at.y, c.look_at.z],
            up: [c.up.x, c.up.y, c.up.z],
            vertical_fov_deg: c.vertical_fov_deg,
            width: c.width,
            height: c.height,
        }
    }
}

impl CameraSection {
    pub fn to_camera(&self) -> CameraSpec {
        CameraSpec {
            position: Vec3::new(self.position[0], self.position[1], self.position[2]),
            look_at: Vec3::new(self.look_at[0], self.look_at[1], self.look_at[2]),
            up: Vec3::new(self.up[0], self.up[1], self.up[2]),
            vertical_fov_deg: self.vertical_fov_deg,
            width: self.width,
            height: self.height,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObservationSection {
    pub patch_size: usize,
    pub mask_ratio: f64,
    pub stride: usize,
    pub body_length: f64,
    pub body_width: f64,
}

impl Default for ObservationSection {
    fn default() -> Self {
        ObservationSection {
            patch_size: 8,
            mask_ratio: 0.5,
            stride: 10,
            body_length: 0.4,
            body_width: 0.12,
        }
    }
}

impl ObservationSection {
    pub fn to_body(&self) -> BodyProxy {
        BodyProxy { length: self.body_length, width: self.body_width }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MvaeSection {
    pub dim: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub heads: usize,
    pub mlp_hidden: usize,
    pub latent: usize,
    pub beta: f64,
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    /// Cap the training set to this many evenly spaced clips (0 = no cap).
    pub max_clips: usize,
}

impl Default for MvaeSection {
    fn default() -> Self {
        let m = MvaeConfig::default();
        MvaeSection {
            dim: m.dim,
            enc_layers: m.enc_layers,
            dec_layers: m.dec_layers,
            heads: m.heads,
            mlp_hidden: m.mlp_hidden,
            latent: m.latent,
            beta: m.beta,
            lr: 1e-3,
            batch: 16,
            epochs: 200,
            max_clips: 0,
        }
    }
}

impl MvaeSection {
    pub fn to_mvae_config(&self, camera: &CameraSection, obs: &ObservationSection) -> MvaeConfig {
        MvaeConfig {
            frame_w: camera.width,
            frame_h: camera.height,
            patch: obs.patch_size,
            dim: self.dim,
            enc_layers: self.enc_layers,
            dec_layers: self.dec_layers,
            heads: self.heads,
            mlp_hidden: self.mlp_hidden,
            latent: self.latent,
            beta: self.beta,
        }
    }

    pub fn to_train_config(&self, obs: &ObservationSection, seed: u64) -> MvaeTrainConfig {
        MvaeTrainConfig {
            epochs: self.epochs,
            batch: self.batch,
            lr: self.lr,
            mask_ratio: obs.mask_ratio,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterSection {
    pub method: String,
    pub perplexity: f64,
    pub tsne_iters: usize,
    pub k_max: usize,
    pub restarts: usize,
}

impl Default for ClusterSection {
    fn default() -> Self {
        ClusterSection { method: "tsne".into(), perplexity: 30.0, tsne_iters: 1000, k_max: 10, restarts: 10 }
    }
}

impl ClusterSection {
    pub fn reduce_method(&self) -> Result<ReduceMethod> {
        match self.method.as_str() {
            "tsne" => Ok(ReduceMethod::Tsne { perplexity: self.perplexity, iters: self.tsne_iters }),
            "pca" => Ok(ReduceMethod::Pca),
            other => Err(CliError::Usage(format!("unknown cluster method {other:?} (tsne|pca)"))),
        }
    }

    pub fn to_build_config(&self, seed: u64) -> Result<ClusterBuildConfig> {
        Ok(ClusterBuildConfig {
            method: self.reduce_method()?,
            k_max: self.k_max,
            restarts: self.restarts,
            seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub task: Task,
    pub target_speed: f64,
    pub policy_hidden: Vec<usize>,
    pub value_hidden: Vec<usize>,
    pub log_std: Vec<f64>,
    pub k_neighbors: usize,
    pub lr_policy: f64,
    pub lr_value: f64,
    pub lr_disc: f64,
    pub eps_clip: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub entropy_coef: f64,
    pub ppo_epochs: usize,
    pub minibatch: usize,
    pub horizon: usize,
    pub total_env_steps: usize,
    pub w_gp: f64,
    pub disc_updates: usize,
    pub disc_batch: usize,
    pub replay_capacity: usize,
    pub no_clustering: bool,
    pub checkpoint_interval: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let c = CbilConfig::default();
        TrainSection {
            task: Task::CirclingCw,
            target_speed: 1.0,
            policy_hidden: c.policy_hidden,
            value_hidden: c.value_hidden,
            log_std: c.log_std,
            k_neighbors: c.k_neighbors,
            lr_policy: c.lr_policy,
            lr_value: c.lr_value,
            lr_disc: c.lr_disc,
            eps_clip: c.ppo.eps_clip,
            gamma: c.gamma,
            gae_lambda: c.lambda,
            entropy_coef: c.ppo.entropy_coef,
            ppo_epochs: c.ppo.epochs,
            minibatch: c.ppo.minibatch,
            horizon: c.horizon,
            total_env_steps: c.total_env_steps,
            w_gp: c.w_gp,
            disc_updates: c.disc_updates,
            disc_batch: c.disc_batch,
            replay_capacity: c.replay_capacity,
            no_clustering: false,
            checkpoint_interval: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardsSection {
    pub aggregation_a: f64,
    pub aggregation_b: f64,
    pub aggregation_w: f64,
}

impl Default for RewardsSection {
    fn default() -> Self {
        RewardsSection { aggregation_a: 2.0, aggregation_b: 1.0, aggregation_w: 1.0 }
    }
}

impl RewardsSection {
    pub fn to_agg(&self) -> AggregationParams {
        AggregationParams { a: self.aggregation_a, b: self.aggregation_b, w: self.aggregation_w }
    }
}

impl EngineConfig {
    pub fn from_str(text: &str) -> Result<Self> {
        let mut cfg: EngineConfig =
            toml::from_str(text).map_err(|e| CliError::Usage(format!("config parse error: {e}")))?;
        cfg.echo = text.to_string();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::MissingArtifact(format!("config file {}: {e}", path.display())))?;
        Self::from_str(&text)
    }

    fn validate(&self) -> Result<()> {
        if self.sim.agent_count == 0 {
            return Err(CliError::Usage("sim.agent_count must be at least 1".into()));
        }
        if self.camera.width % self.observation.patch_size != 0
            || self.camera.height % self.observation.patch_size != 0
        {
            return Err(CliError::Usage(format!(
                "camera resolution {}x{} must divide by observation.patch_size {}",
                self.camera.width, self.camera.height, self.observation.patch_size
            )));
        }
        if self.mvae.dim % self.mvae.heads != 0 {
            return Err(CliError::Usage("mvae.dim must divide by mvae.heads".into()));
        }
        if self.train.log_std.len() != 3 {
            return Err(CliError::Usage("train.log_std needs exactly 3 entries".into()));
        }
        self.cluster.reduce_method()?;
        Ok(())
    }

    pub fn to_cbil_config(&self) -> CbilConfig {
        CbilConfig {
            env: self.sim.to_env_config(),
            camera: self.camera.to_camera(),
            body: self.observation.to_body(),
            task: self.train.task,
            target_speed: self.train.target_speed,
            agg: self.rewards.to_agg(),
            policy_hidden: self.train.policy_hidden.clone(),
            value_hidden: self.train.value_hidden.clone(),
            log_std: self.train.log_std.clone(),
            k_neighbors: self.train.k_neighbors,
            lr_policy: self.train.lr_policy,
            lr_value: self.train.lr_value,
            lr_disc: self.train.lr_disc,
            ppo: PpoConfig {
                eps_clip: self.train.eps_clip,
                epochs: self.train.ppo_epochs,
                minibatch: self.train.minibatch,
                entropy_coef: self.train.entropy_coef,
            },
            gamma: self.train.gamma,
            lambda: self.train.gae_lambda,
            horizon: self.train.horizon,
            total_env_steps: self.train.total_env_steps,
            w_gp: self.train.w_gp,
            disc_updates: self.train.disc_updates,
            disc_batch: self.train.disc_batch,
            replay_capacity: self.train.replay_capacity,
            no_clustering: self.train.no_clustering,
            dominant_fraction: self.sim.dominant_fraction,
            seed: self.seed,
        }
    }

    /// Apply the thread limit to the numeric kernels.
    pub fn apply_threads(&self) {
        school_nn::set_thread_limit(self.threads);
    }
}
