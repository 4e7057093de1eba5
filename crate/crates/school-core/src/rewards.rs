//! Behavior rewards, goal observations and the weighted total reward.
//!
//! Every task reward is a pure function of agent state and goal geometry.
//! Raw task values are mapped into [0,1] by `TaskNormalizer` before they are
//! combined with the style and regularization terms.

use crate::sim::{AgentState, Action, CageSpec, EnvState, Limits, Role, neighbors};
use crate::vec::{Vec3, UP};
use serde::{Deserialize, Serialize};

pub const ALIGNMENT_RADIUS: f64 = 3.0;
pub const AGGREGATION_RADIUS: f64 = 5.0;
pub const COHESION_RADIUS: f64 = 3.0;

pub const W_CIRCLE_DIR: f64 = 10.0;
pub const W_CIRCLE_VEL: f64 = 10.0;
pub const W_ALIGNMENT: f64 = 1.0;
pub const W_CHASE_DOM: f64 = 8.0;
pub const W_CHASE_SUB: f64 = 1.0;
pub const W_COHESION: f64 = 5.0;
pub const R_FEED: f64 = 10.0;
pub const FEED_EPSILON: f64 = 0.01;

/// Reward mixing weights of the total reward.
pub const W_STYLE: f64 = 0.4;
pub const W_BIO: f64 = 0.1;
pub const W_TASK: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    CirclingCw,
    CirclingCcw,
    Alignment,
    Aggregation,
    Chasing,
    Cohesion,
    Feeding,
}

/// Per-task control signal passed to the policy as part of the observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Goal {
    Circling { target_dir: Vec3, target_speed: f64 },
    Alignment { mean_dir: Vec3 },
    Aggregation { center: Vec3 },
    ChaseDom { dir: Vec3 },
    ChaseSub { dir: Vec3 },
    Cohesion { center: Vec3 },
    Feeding { offset: Vec3 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_style: f64,
    pub r_bio: f64,
    pub r_task: f64,
    pub total: f64,
}

/// Tangential circling direction at `position`: cross product of the world
/// vertical with the vector toward the cage center; clockwise when seen from
/// above. Falls back to the current forward at the degenerate cage axis.
pub fn circling_target_dir(position: Vec3, forward: Vec3, clockwise: bool) -> Vec3 {
    let to_center = Vec3::ZERO - position;
    match UP.cross(to_center).normalized() {
        Some(d) => {
            if clockwise {
                d
            } else {
                -d
            }
        }
        None => forward,
    }
}

pub fn circling_reward(state: &AgentState, target_dir: Vec3, target_speed: f64) -> f64 {
    let v = state.velocity();
    let dir_term = match v.normalized() {
        Some(vhat) => target_dir.dot(vhat),
        None => 0.0,
    };
    W_CIRCLE_DIR * dir_term - W_CIRCLE_VEL * (v.norm() - target_speed).powi(2)
}

/// Sum over neighbors of (180deg - angle(forward, forward_j)) / 180deg.
pub fn alignment_reward(state: &AgentState, neighbor_states: &[&AgentState]) -> f64 {
    let own = state.forward;
    let sum: f64 = neighbor_states
        .iter()
        .map(|n| {
            let cosang = own.dot(n.forward).clamp(-1.0, 1.0);
            let theta_deg = cosang.acos().to_degrees();
            (180.0 - theta_deg) / 180.0
        })
        .sum();
    W_ALIGNMENT * sum
}

pub fn aggregation_reward(state: &AgentState, center: Vec3, a: f64, b: f64, w_agg: f64) -> f64 {
    assert!(a > 0.0, "aggregation steepness must be positive");
    let dist = state.position.distance(center);
    -(w_agg * dist) / (1.0 + (-a * (dist - b)).exp())
}

/// Rewards for a dominant/subordinate pair. Both use the unit vector from the
/// dominant toward the subordinate; coincident positions yield zero.
pub fn chase_rewards(dom: &AgentState, sub: &AgentState) -> (f64, f64) {
    match (sub.position - dom.position).normalized() {
        Some(d) => (W_CHASE_DOM * d.dot(dom.velocity()), W_CHASE_SUB * d.dot(sub.velocity())),
        None => (0.0, 0.0),
    }
}

/// Attraction toward the local school center (sign flipped to attract).
pub fn cohesion_reward(state: &AgentState, center: Vec3) -> f64 {
    -W_COHESION * state.position.distance(center)
}

pub fn feeding_reward(state: &AgentState, nearest_food: Option<Vec3>) -> f64 {
    match nearest_food {
        Some(f) if state.position.distance(f) < FEED_EPSILON => R_FEED,
        _ => 0.0,
    }
}

/// Rule-based regularizer: separation, boundary avoidance and action
/// smoothness, each in [-1, 0], mixed 0.4/0.4/0.2 and mapped to [0,1].
pub fn bio_reward(
    state: &AgentState,
    action: &Action,
    neighbor_states: &[&AgentState],
    cage: &CageSpec,
    limits: &Limits,
) -> f64 {
    let separation = neighbor_states
        .iter()
        .map(|n| n.position.distance(state.position))
        .fold(f64::INFINITY, f64::min);
    let sep_term = if separation.is_finite() {
        if separation < 0.5 {
            -1.0
        } else if separation < 1.0 {
            -(1.0 - separation) / 0.5
        } else {
            0.0
        }
    } else {
        0.0
    };

    let wall = cage.wall_distance(state.position).max(0.0);
    let wall_term = if wall < 0.5 {
        -1.0
    } else if wall < 1.5 {
        -(1.5 - wall) / 1.0
    } else {
        0.0
    };

    let a = action.clamped(limits);
    let smooth_term = -0.5
        * ((a.delta_yaw / limits.max_delta_yaw).powi(2)
            + (a.delta_pitch / limits.max_delta_pitch).powi(2));

    let raw = 0.4 * sep_term + 0.4 * wall_term + 0.2 * smooth_term;
    (raw + 1.0).clamp(0.0, 1.0)
}

/// Goal construction for one agent, exactly as each task defines it.
pub fn goal_observation(task: Task, env: &EnvState, index: usize, target_speed: f64) -> Goal {
    let agent = &env.agents[index];
    match task {
        Task::CirclingCw => Goal::Circling {
            target_dir: circling_target_dir(agent.position, agent.forward, true),
            target_speed,
        },
        Task::CirclingCcw => Goal::Circling {
            target_dir: circling_target_dir(agent.position, agent.forward, false),
            target_speed,
        },
        Task::Alignment => {
            let ns = neighbors(env, index, ALIGNMENT_RADIUS).unwrap_or_default();
            let mean = ns
                .iter()
                .fold(Vec3::ZERO, |acc, &j| acc + env.agents[j].forward);
            Goal::Alignment { mean_dir: mean.normalized().unwrap_or(agent.forward) }
        }
        Task::Aggregation => {
            let ns = neighbors(env, index, AGGREGATION_RADIUS).unwrap_or_default();
            let center = if ns.is_empty() {
                agent.position
            } else {
                ns.iter().fold(Vec3::ZERO, |acc, &j| acc + env.agents[j].position)
                    / ns.len() as f64
            };
            Goal::Aggregation { center }
        }
        Task::Chasing => {
            let counterpart_role = match agent.role {
                Role::Dominant => Role::Subordinate,
                _ => Role::Dominant,
            };
            let nearest = env
                .agents
                .iter()
                .enumerate()
                .filter(|(j, a)| *j != index && a.alive && a.role == counterpart_role)
                .min_by(|(_, a), (_, b)| {
                    a.position
                        .distance(agent.position)
                        .total_cmp(&b.position.distance(agent.position))
                });
            let dir = match nearest {
                Some((_, other)) => {
                    let (dom_p, sub_p) = if agent.role == Role::Dominant {
                        (agent.position, other.position)
                    } else {
                        (other.position, agent.position)
                    };
                    (sub_p - dom_p).normalized().unwrap_or(agent.forward)
                }
                None => agent.forward,
            };
            if agent.role == Role::Dominant {
                Goal::ChaseDom { dir }
            } else {
                Goal::ChaseSub { dir }
            }
        }
        Task::Cohesion => {
            let ns = neighbors(env, index, COHESION_RADIUS).unwrap_or_default();
            let center = if ns.is_empty() {
                agent.position
            } else {
                ns.iter().fold(Vec3::ZERO, |acc, &j| acc + env.agents[j].position)
                    / ns.len() as f64
            };
            Goal::Cohesion { center }
        }
        Task::Feeding => {
            let nearest = env
                .food
                .iter()
                .min_by(|a, b| {
                    a.distance(agent.position).total_cmp(&b.distance(agent.position))
                })
                .copied();
            Goal::Feeding {
                offset: nearest.map(|f| f - agent.position).unwrap_or(Vec3::ZERO),
            }
        }
    }
}

/// Tunable aggregation shape parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregationParams {
    pub a: f64,
    pub b: f64,
    pub w: f64,
}

impl Default for AggregationParams {
    fn default() -> Self {
        AggregationParams { a: 2.0, b: 1.0, w: 1.0 }
    }
}

/// Raw task reward for one agent under the given goal.
pub fn task_reward(
    task: Task,
    env: &EnvState,
    index: usize,
    goal: &Goal,
    agg: &AggregationParams,
    fed: bool,
) -> f64 {
    let agent = &env.agents[index];
    match (task, goal) {
        (Task::CirclingCw | Task::CirclingCcw, Goal::Circling { target_dir, target_speed }) => {
            circling_reward(agent, *target_dir, *target_speed)
        }
        (Task::Alignment, Goal::Alignment { .. }) => {
            let ns = neighbors(env, index, ALIGNMENT_RADIUS).unwrap_or_default();
            let states: Vec<&AgentState> = ns.iter().map(|&j| &env.agents[j]).collect();
            alignment_reward(agent, &states)
        }
        (Task::Aggregation, Goal::Aggregation { center }) => {
            let ns = neighbors(env, index, AGGREGATION_RADIUS).unwrap_or_default();
            if ns.is_empty() {
                0.0
            } else {
                aggregation_reward(agent, *center, agg.a, agg.b, agg.w)
            }
        }
        (Task::Chasing, Goal::ChaseDom { dir }) => W_CHASE_DOM * dir.dot(agent.velocity()),
        (Task::Chasing, Goal::ChaseSub { dir }) => W_CHASE_SUB * dir.dot(agent.velocity()),
        (Task::Cohesion, Goal::Cohesion { center }) => {
            let ns = neighbors(env, index, COHESION_RADIUS).unwrap_or_default();
            if ns.is_empty() {
                0.0
            } else {
                cohesion_reward(agent, *center)
            }
        }
        (Task::Feeding, Goal::Feeding { .. }) => {
            if fed {
                R_FEED
            } else {
                0.0
            }
        }
        _ => 0.0,
    }
}

/// Stateless per-task bounds that map raw task rewards into [0,1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskNormalizer {
    pub lo: f64,
    pub hi: f64,
}

impl TaskNormalizer {
    /// Analytic bounds per task. Circling and chasing use the positive
    /// achievement range so that an aimless policy normalizes near zero.
    pub fn for_task(task: Task, role: Role, cage: &CageSpec, agg: &AggregationParams) -> Self {
        match task {
            Task::CirclingCw | Task::CirclingCcw => TaskNormalizer { lo: 0.0, hi: 10.0 },
            Task::Alignment => TaskNormalizer { lo: 0.0, hi: 10.0 },
            Task::Aggregation => TaskNormalizer { lo: -agg.w * cage.diagonal(), hi: 0.0 },
            Task::Chasing => match role {
                Role::Subordinate => TaskNormalizer { lo: 0.0, hi: 1.5 },
                _ => TaskNormalizer { lo: 0.0, hi: 12.0 },
            },
            Task::Cohesion => TaskNormalizer { lo: -W_COHESION * cage.diagonal(), hi: 0.0 },
            Task::Feeding => TaskNormalizer { lo: 0.0, hi: R_FEED },
        }
    }

    pub fn normalize(&self, raw: f64) -> f64 {
        ((raw - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0)
    }
}

/// Weighted total per the fixed 0.4 / 0.1 / 0.5 mixing.
pub fn total_reward(r_style: f64, r_bio: f64, r_task_raw: f64, norm: &TaskNormalizer) -> RewardBreakdown {
    debug_assert!((0.0..=1.0).contains(&r_style), "style reward out of range: {r_style}");
    debug_assert!((0.0..=1.0).contains(&r_bio), "bio reward out of range: {r_bio}");
    let r_task = norm.normalize(r_task_raw);
    RewardBreakdown {
        r_style,
        r_bio,
        r_task,
        total: W_STYLE * r_style + W_BIO * r_bio + W_TASK * r_task,
    }
}
