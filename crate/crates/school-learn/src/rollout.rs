//! Rollout collection: step the school with the shared policy, render
//! silhouette clips on a fixed window, encode latent transitions and attach
//! per-step reward breakdowns.

use crate::cluster::ClusterModel;
use crate::discriminator::{Discriminator, PairSource, TransitionPair, style_reward};
use crate::error::Result;
use crate::mvae::{Latent, MvaeParams, encode_stream};
use crate::policy::{ACTION_DIM, PolicyParams, ValueParams, sample_action};
use rand_chacha::ChaCha8Rng;
use school_core::camera::CameraSpec;
use school_core::clip::{CLIP_LEN, Clip};
use school_core::rewards::{
    AggregationParams, Goal, RewardBreakdown, Task, TaskNormalizer, bio_reward, goal_observation,
    task_reward, total_reward,
};
use school_core::silhouette::{BodyProxy, SilhouetteFrame, rasterize_silhouettes};
use school_core::sim::{
    Action, AgentState, EnvConfig, EnvState, Role, init_environment, neighbors, spawn_food,
    step_environment,
};
use school_core::vec::Vec3;

/// Neutral style value used before the first latent transition of a rollout.
pub const STYLE_NEUTRAL: f64 = 0.5;
pub const DEFAULT_K_NEIGHBORS: usize = 8;
const NEIGHBOR_FEATURES: usize = 7;
const OWN_FEATURES: usize = 7;
const GOAL_FEATURES: usize = 4;

pub fn observation_dim(k_neighbors: usize) -> usize {
    OWN_FEATURES + k_neighbors * NEIGHBOR_FEATURES + GOAL_FEATURES
}

/// Ego-centric observation: own state, K nearest neighbors in the body frame
/// (zero-padded), and the goal encoding.
pub fn build_observation(
    env: &EnvState,
    index: usize,
    goal: &Goal,
    k_neighbors: usize,
) -> Vec<f64> {
    let agent = &env.agents[index];
    let h = env.cage.half_extents();
    let mut obs = Vec::with_capacity(observation_dim(k_neighbors));
    obs.push(agent.position.x / h.x);
    obs.push(agent.position.y / h.y);
    obs.push(agent.position.z / h.z);
    obs.push(agent.forward.x);
    obs.push(agent.forward.y);
    obs.push(agent.forward.z);
    obs.push(agent.speed);

    let mut others: Vec<(f64, usize)> = env
        .agents
        .iter()
        .enumerate()
        .filter(|(j, a)| *j != index && a.alive)
        .map(|(j, a)| (a.position.distance(agent.position), j))
        .collect();
    others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    for slot in 0..k_neighbors {
        if let Some(&(_, j)) = others.get(slot) {
            let n = &env.agents[j];
            let rel_p = agent.rotation.rotate_inv(n.position - agent.position);
            let rel_f = agent.rotation.rotate_inv(n.forward);
            obs.extend_from_slice(&[rel_p.x, rel_p.y, rel_p.z, rel_f.x, rel_f.y, rel_f.z, n.speed]);
        } else {
            obs.extend_from_slice(&[0.0; NEIGHBOR_FEATURES]);
        }
    }

    let (gvec, gaux) = encode_goal(agent, goal);
    obs.extend_from_slice(&[gvec.x, gvec.y, gvec.z, gaux]);
    debug_assert_eq!(obs.len(), observation_dim(k_neighbors));
    obs
}

fn encode_goal(agent: &AgentState, goal: &Goal) -> (Vec3, f64) {
    match goal {
        Goal::Circling { target_dir, target_speed } => {
            (agent.rotation.rotate_inv(*target_dir), target_speed - agent.speed)
        }
        Goal::Alignment { mean_dir } => (agent.rotation.rotate_inv(*mean_dir), 0.0),
        Goal::Aggregation { center } | Goal::Cohesion { center } => {
            (agent.rotation.rotate_inv(*center - agent.position), 0.0)
        }
        Goal::ChaseDom { dir } | Goal::ChaseSub { dir } => (agent.rotation.rotate_inv(*dir), 0.0),
        Goal::Feeding { offset } => (agent.rotation.rotate_inv(*offset), 0.0),
    }
}

#[derive(Debug, Clone)]
pub struct StepRecord {
    pub agent: usize,
    pub obs: Vec<f64>,
    pub action: [f64; ACTION_DIM],
    pub log_prob: f64,
    pub value: f64,
    pub reward: RewardBreakdown,
    pub done: bool,
    /// Index into the rollout's transition pairs whose style value this step
    /// held; `None` before the first pair.
    pub window: Option<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct RolloutBatch {
    pub per_agent: Vec<Vec<StepRecord>>,
    /// Bootstrap value per agent for an unfinished final segment.
    pub final_values: Vec<Option<f64>>,
    pub pairs: Vec<TransitionPair>,
    pub latents: Vec<Latent>,
    pub env_steps: usize,
}

impl RolloutBatch {
    pub fn record_count(&self) -> usize {
        self.per_agent.iter().map(|v| v.len()).sum()
    }
}

pub struct RolloutContext<'a> {
    pub env_cfg: &'a EnvConfig,
    pub camera: &'a CameraSpec,
    pub body: &'a BodyProxy,
    pub task: Task,
    pub target_speed: f64,
    pub agg: &'a AggregationParams,
    pub mvae: &'a MvaeParams,
    pub disc: &'a Discriminator,
    pub style_model: &'a ClusterModel,
    pub k_neighbors: usize,
    pub deterministic_actions: bool,
}

/// Roll the environment forward `horizon` steps under the policy.
///
/// Frames are rasterized after every step; each completed non-overlapping
/// window of CLIP_LEN frames is encoded, and consecutive latents form the
/// policy transition pairs. The style value of the newest pair is held for
/// the following steps.
pub fn collect_rollouts(
    env: &mut EnvState,
    policy: &PolicyParams,
    value: &ValueParams,
    ctx: &RolloutContext,
    horizon: usize,
    action_rng: &mut ChaCha8Rng,
    env_rng: &mut ChaCha8Rng,
) -> Result<RolloutBatch> {
    collect_rollouts_traced(env, policy, value, ctx, horizon, action_rng, env_rng, |_| {})
}

/// Everything the per-step trace callback can see after one environment step.
pub struct StepTrace<'a> {
    pub step: usize,
    pub env: &'a EnvState,
    pub flags: &'a [school_core::sim::StepFlags],
    /// Reward breakdown per agent; `None` for agents that did not act.
    pub rewards: &'a [Option<RewardBreakdown>],
}

#[allow(clippy::too_many_arguments)]
pub fn collect_rollouts_traced(
    env: &mut EnvState,
    policy: &PolicyParams,
    value: &ValueParams,
    ctx: &RolloutContext,
    horizon: usize,
    action_rng: &mut ChaCha8Rng,
    env_rng: &mut ChaCha8Rng,
    mut on_step: impl FnMut(&StepTrace),
) -> Result<RolloutBatch> {
    let n_agents = env.agents.len();
    let mut batch = RolloutBatch {
        per_agent: vec![Vec::new(); n_agents],
        final_values: vec![None; n_agents],
        ..Default::default()
    };
    let mut frame_buffer: Vec<SilhouetteFrame> = Vec::with_capacity(CLIP_LEN);
    let mut held_style = STYLE_NEUTRAL;
    let mut held_window: Option<usize> = None;

    for step in 0..horizon {
        if ctx.task == Task::Feeding && env.food.is_empty() {
            spawn_food(env, env_rng);
        }

        let alive = env.alive_indices();
        if alive.is_empty() {
            // whole school in respawn cooldown; advance the clock
            let (next, flags) = step_environment(env, &[], ctx.env_cfg, env_rng)?;
            *env = next;
            batch.env_steps += 1;
            on_step(&StepTrace {
                step,
                env,
                flags: &flags,
                rewards: &vec![None; n_agents],
            });
            continue;
        }

        // observations and batched heads
        let goals: Vec<Goal> = alive
            .iter()
            .map(|&i| goal_observation(ctx.task, env, i, ctx.target_speed))
            .collect();
        let mut obs_rows: Vec<Vec<f64>> = alive
            .iter()
            .zip(&goals)
            .map(|(&i, g)| build_observation(env, i, g, ctx.k_neighbors))
            .collect();
        let obs_dim = observation_dim(ctx.k_neighbors);
        let mut obs_mat = school_nn::Mat::zeros(alive.len(), obs_dim);
        for (r, row) in obs_rows.iter().enumerate() {
            obs_mat.row_mut(r).copy_from_slice(row);
        }
        let means = policy.forward(&obs_mat);
        let values = value.forward(&obs_mat);

        let mut actions = Vec::with_capacity(alive.len());
        let mut raws: Vec<([f64; ACTION_DIM], f64)> = Vec::with_capacity(alive.len());
        for r in 0..alive.len() {
            let (a, lp) = sample_action(
                means.row(r),
                &policy.log_std,
                action_rng,
                ctx.deterministic_actions,
            );
            actions.push(Action { delta_speed: a[0], delta_yaw: a[1], delta_pitch: a[2] });
            raws.push(([a[0], a[1], a[2]], lp));
        }

        let (next, flags) = step_environment(env, &actions, ctx.env_cfg, env_rng)?;

        // silhouette window bookkeeping on the post-step state
        frame_buffer.push(rasterize_silhouettes(&next, ctx.camera, ctx.body));
        if frame_buffer.len() == CLIP_LEN {
            let clip = Clip::new(std::mem::take(&mut frame_buffer));
            let z = encode_stream(ctx.mvae, &[clip])?.pop().expect("one latent");
            if let Some(prev) = batch.latents.last() {
                let pair = TransitionPair {
                    z: prev.clone(),
                    z_next: z.clone(),
                    source: PairSource::Policy,
                };
                held_style = style_reward(ctx.disc, ctx.style_model, &pair);
                batch.pairs.push(pair);
                held_window = Some(batch.pairs.len() - 1);
            }
            batch.latents.push(z);
        }

        // rewards on the post-step state
        let mut step_rewards: Vec<Option<RewardBreakdown>> = vec![None; n_agents];
        for (k, &i) in alive.iter().enumerate() {
            let agent_next = &next.agents[i];
            let goal_next = goal_observation(ctx.task, &next, i, ctx.target_speed);
            let raw_task = task_reward(ctx.task, &next, i, &goal_next, ctx.agg, flags[i].fed);
            let ns = neighbors(&next, i, 3.0).unwrap_or_default();
            let n_states: Vec<&AgentState> = ns.iter().map(|&j| &next.agents[j]).collect();
            let bio = bio_reward(agent_next, &actions[k], &n_states, &next.cage, &ctx.env_cfg.limits);
            let norm = TaskNormalizer::for_task(ctx.task, agent_next.role, &next.cage, ctx.agg);
            let breakdown = total_reward(held_style, bio, raw_task, &norm);
            step_rewards[i] = Some(breakdown);
            batch.per_agent[i].push(StepRecord {
                agent: i,
                obs: std::mem::take(&mut obs_rows[k]),
                action: raws[k].0,
                log_prob: raws[k].1,
                value: values.get(k, 0),
                reward: breakdown,
                done: flags[i].done,
                window: held_window,
            });
        }

        on_step(&StepTrace { step, env: &next, flags: &flags, rewards: &step_rewards });

        *env = if ctx.env_cfg.termination == school_core::sim::Termination::Episode
            && alive.iter().any(|&i| flags[i].done)
        {
            use rand::Rng;
            let reseed: u64 = env_rng.gen();
            init_environment(ctx.env_cfg, reseed)?
        } else {
            next
        };
        batch.env_steps += 1;
    }

    // bootstrap values for unfinished segments
    let mut pending: Vec<usize> = Vec::new();
    for i in 0..n_agents {
        if let Some(last) = batch.per_agent[i].last() {
            if !last.done && env.agents[i].alive {
                pending.push(i);
            }
        }
    }
    if !pending.is_empty() {
        let obs_dim = observation_dim(ctx.k_neighbors);
        let mut obs_mat = school_nn::Mat::zeros(pending.len(), obs_dim);
        for (r, &i) in pending.iter().enumerate() {
            let goal = goal_observation(ctx.task, env, i, ctx.target_speed);
            let row = build_observation(env, i, &goal, ctx.k_neighbors);
            obs_mat.row_mut(r).copy_from_slice(&row);
        }
        let values = value.forward(&obs_mat);
        for (r, &i) in pending.iter().enumerate() {
            batch.final_values[i] = Some(values.get(r, 0));
        }
    }

    Ok(batch)
}

/// Re-evaluate the held style values of a batch with an updated
/// discriminator, and rebuild each record's total reward.
pub fn refresh_style_rewards(
    batch: &mut RolloutBatch,
    disc: &Discriminator,
    model: &ClusterModel,
    task: Task,
    cage: &school_core::sim::CageSpec,
    agg: &AggregationParams,
    roles: &[Role],
) {
    let styles: Vec<f64> = batch.pairs.iter().map(|p| style_reward(disc, model, p)).collect();
    for records in batch.per_agent.iter_mut() {
        for rec in records.iter_mut() {
            let style = match rec.window {
                Some(w) => styles[w],
                None => STYLE_NEUTRAL,
            };
            let norm = TaskNormalizer::for_task(task, roles[rec.agent], cage, agg);
            // invert the stored normalized task value back through the fixed map
            let raw_task = norm.lo + rec.reward.r_task * (norm.hi - norm.lo);
            rec.reward = total_reward(style, rec.reward.r_bio, raw_task, &norm);
        }
    }
}

/// Per-episode traces of normalized task rewards, for the task-return metric.
pub fn episode_task_rewards(batch: &RolloutBatch) -> Vec<Vec<f64>> {
    let mut episodes = Vec::new();
    for records in &batch.per_agent {
        let mut current = Vec::new();
        for rec in records {
            current.push(rec.reward.r_task);
            if rec.done {
                episodes.push(std::mem::take(&mut current));
            }
        }
        if !current.is_empty() {
            episodes.push(current);
        }
    }
    episodes
}
