//! Rule-based reference controllers.
//!
//! These drive the school toward a named pattern using the same geometric
//! targets as the task rewards; their trajectories stand in for reference
//! footage when generating training data.

use crate::rewards::{ALIGNMENT_RADIUS, AGGREGATION_RADIUS, circling_target_dir};
use crate::sim::{Action, EnvState, Limits, neighbors};
use crate::vec::Vec3;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptedPattern {
    ClockwiseCircle,
    CounterClockwiseCircle,
    Align,
    Aggregate,
}

/// Steering gains for obstacle and neighbor avoidance.
const WALL_AVOID_RANGE: f64 = 1.5;
const WALL_AVOID_GAIN: f64 = 1.5;
const SEPARATION_RANGE: f64 = 0.8;
const SEPARATION_GAIN: f64 = 1.2;
const CENTER_PUSH_RADIUS: f64 = 3.0;

fn avoidance(env: &EnvState, index: usize) -> Vec3 {
    let agent = &env.agents[index];
    let mut steer = Vec3::ZERO;

    let wall = env.cage.wall_distance(agent.position).max(0.0);
    if wall < WALL_AVOID_RANGE {
        if let Some(inward) = (Vec3::ZERO - agent.position).normalized() {
            steer = steer + inward * (WALL_AVOID_GAIN * (WALL_AVOID_RANGE - wall) / WALL_AVOID_RANGE);
        }
    }

    if let Ok(ns) = neighbors(env, index, SEPARATION_RANGE) {
        for j in ns {
            let away = agent.position - env.agents[j].position;
            let d = away.norm();
            if let Some(dir) = away.normalized() {
                steer = steer + dir * (SEPARATION_GAIN * (SEPARATION_RANGE - d) / SEPARATION_RANGE);
            }
        }
    }
    steer
}

fn desired_direction(env: &EnvState, index: usize, pattern: ScriptedPattern) -> Vec3 {
    let agent = &env.agents[index];
    let base = match pattern {
        ScriptedPattern::ClockwiseCircle | ScriptedPattern::CounterClockwiseCircle => {
            let clockwise = pattern == ScriptedPattern::ClockwiseCircle;
            let mut dir = circling_target_dir(agent.position, agent.forward, clockwise);
            // near the cage axis the tangent is cramped; drift outward first
            let radial = Vec3::new(agent.position.x, 0.0, agent.position.z);
            let r = radial.norm();
            if r < CENTER_PUSH_RADIUS {
                if let Some(out) = radial.normalized() {
                    dir = dir + out * ((CENTER_PUSH_RADIUS - r) / CENTER_PUSH_RADIUS);
                }
            }
            dir
        }
        ScriptedPattern::Align => {
            let ns = neighbors(env, index, ALIGNMENT_RADIUS).unwrap_or_default();
            let mean = ns.iter().fold(Vec3::ZERO, |acc, &j| acc + env.agents[j].forward);
            mean.normalized().unwrap_or(agent.forward)
        }
        ScriptedPattern::Aggregate => {
            let ns = neighbors(env, index, AGGREGATION_RADIUS).unwrap_or_default();
            if ns.is_empty() {
                // wander toward the cage center until the school is in range
                (Vec3::ZERO - agent.position).normalized().unwrap_or(agent.forward)
            } else {
                let center =
                    ns.iter().fold(Vec3::ZERO, |acc, &j| acc + env.agents[j].position) / ns.len() as f64;
                (center - agent.position).normalized().unwrap_or(agent.forward)
            }
        }
    };
    (base + avoidance(env, index)).normalized().unwrap_or(agent.forward)
}

/// Steer one agent toward a direction and speed; deltas saturate at the bounds.
pub fn steer_toward(agent: &crate::sim::AgentState, dir: Vec3, target_speed: f64, limits: &Limits) -> Action {
    let local = agent.rotation.rotate_inv(dir);
    let delta_yaw = local.z.atan2(local.x);
    let horiz = (local.x * local.x + local.z * local.z).sqrt();
    let delta_pitch = local.y.atan2(horiz);
    Action {
        delta_speed: target_speed - agent.speed,
        delta_yaw,
        delta_pitch,
    }
    .clamped(limits)
}

/// Actions for all alive agents (index order), driving the named pattern.
pub fn scripted_reference_controller(
    env: &EnvState,
    pattern: ScriptedPattern,
    target_speed: f64,
    limits: &Limits,
) -> Vec<Action> {
    env.alive_indices()
        .into_iter()
        .map(|i| {
            let dir = desired_direction(env, i, pattern);
            steer_toward(&env.agents[i], dir, target_speed, limits)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{EnvConfig, init_environment};
    use crate::vec::FORWARD;

    #[test]
    fn circling_agent_on_x_wall_steers_tangentially() {
        let mut cfg = EnvConfig::default();
        cfg.agent_count = 1;
        let mut env = init_environment(&cfg, 1).unwrap();
        env.agents[0].position = Vec3::new(5.0, 0.0, 0.0);
        env.agents[0].rotation = crate::vec::UnitQuat::IDENTITY;
        env.agents[0].forward = FORWARD;
        let acts = scripted_reference_controller(&env, ScriptedPattern::ClockwiseCircle, 1.0, &cfg.limits);
        // tangent at +x is +z, i.e. a positive (left-to-z) yaw
        assert!(acts[0].delta_yaw > 0.2, "yaw = {}", acts[0].delta_yaw);
    }

    #[test]
    fn aligned_school_gets_near_zero_deltas() {
        let mut cfg = EnvConfig::default();
        cfg.agent_count = 5;
        let mut env = init_environment(&cfg, 3).unwrap();
        for (i, a) in env.agents.iter_mut().enumerate() {
            a.position = Vec3::new(-2.0 + i as f64, 0.0, 0.0);
            a.rotation = crate::vec::UnitQuat::yaw(0.3);
            a.forward = a.rotation.rotate(FORWARD);
            a.speed = 1.0;
        }
        let acts = scripted_reference_controller(&env, ScriptedPattern::Align, 1.0, &cfg.limits);
        for a in &acts {
            assert!(a.delta_yaw.abs() < 1e-9, "yaw {}", a.delta_yaw);
            assert!(a.delta_pitch.abs() < 1e-9, "pitch {}", a.delta_pitch);
        }
    }
}
