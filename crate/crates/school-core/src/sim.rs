//! Cage environment: agent kinematics, collision rules and scenario entities.
//!
//! The cage is an axis-aligned box centered at the origin; `width` spans x,
//! `height` spans the vertical y axis, `depth` spans z. Stepping is
//! double-buffered: every agent advances from the immutable time-t snapshot,
//! so processing order cannot influence the result.

use crate::error::{CoreError, Result};
use crate::vec::{Vec3, UnitQuat, FORWARD, LATERAL, UP};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CageSpec {
    pub width: f64,
    pub depth: f64,
    pub height: f64,
}

impl Default for CageSpec {
    fn default() -> Self {
        CageSpec { width: 12.0, depth: 12.0, height: 9.0 }
    }
}

impl CageSpec {
    pub fn half_extents(&self) -> Vec3 {
        Vec3::new(self.width * 0.5, self.height * 0.5, self.depth * 0.5)
    }

    pub fn contains(&self, p: Vec3) -> bool {
        let h = self.half_extents();
        p.x.abs() < h.x && p.y.abs() < h.y && p.z.abs() < h.z
    }

    /// Distance from `p` to the nearest cage face (negative outside).
    pub fn wall_distance(&self, p: Vec3) -> f64 {
        let h = self.half_extents();
        (h.x - p.x.abs()).min(h.y - p.y.abs()).min(h.z - p.z.abs())
    }

    /// Clamp a point strictly inside the box with the given margin.
    pub fn clamp_inside(&self, p: Vec3, margin: f64) -> Vec3 {
        let h = self.half_extents();
        Vec3::new(
            p.x.clamp(-(h.x - margin), h.x - margin),
            p.y.clamp(-(h.y - margin), h.y - margin),
            p.z.clamp(-(h.z - margin), h.z - margin),
        )
    }

    pub fn diagonal(&self) -> f64 {
        (self.width * self.width + self.depth * self.depth + self.height * self.height).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Normal,
    Dominant,
    Subordinate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub position: Vec3,
    pub forward: Vec3,
    pub rotation: UnitQuat,
    pub speed: f64,
    pub role: Role,
    pub alive: bool,
}

impl AgentState {
    pub fn velocity(&self) -> Vec3 {
        self.forward * self.speed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub delta_speed: f64,
    pub delta_yaw: f64,
    pub delta_pitch: f64,
}

impl Action {
    pub const ZERO: Action = Action { delta_speed: 0.0, delta_yaw: 0.0, delta_pitch: 0.0 };

    pub fn is_finite(&self) -> bool {
        self.delta_speed.is_finite() && self.delta_yaw.is_finite() && self.delta_pitch.is_finite()
    }

    pub fn clamped(&self, lim: &Limits) -> Action {
        Action {
            delta_speed: self.delta_speed.clamp(-lim.max_delta_speed, lim.max_delta_speed),
            delta_yaw: self.delta_yaw.clamp(-lim.max_delta_yaw, lim.max_delta_yaw),
            delta_pitch: self.delta_pitch.clamp(-lim.max_delta_pitch, lim.max_delta_pitch),
        }
    }
}

/// Per-step actuation bounds and the allowed speed band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    pub speed_min: f64,
    pub speed_max: f64,
    pub max_delta_speed: f64,
    pub max_delta_yaw: f64,
    pub max_delta_pitch: f64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            speed_min: 0.8,
            speed_max: 1.5,
            max_delta_speed: 0.2,
            max_delta_yaw: 0.3,
            max_delta_pitch: 0.15,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Colliding agents are marked done and respawn after a cooldown.
    Respawn,
    /// Any collision ends the episode for the whole school.
    Episode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub agent_count: usize,
    pub cage: CageSpec,
    pub dt: f64,
    pub limits: Limits,
    pub body_radius: f64,
    pub min_separation: f64,
    pub spawn_margin: f64,
    pub termination: Termination,
    pub respawn_cooldown: u32,
    /// Contact radius for food pickup, meters.
    pub feed_epsilon: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            agent_count: 50,
            cage: CageSpec::default(),
            dt: 0.1,
            limits: Limits::default(),
            body_radius: 0.2,
            min_separation: 0.5,
            spawn_margin: 0.5,
            termination: Termination::Respawn,
            respawn_cooldown: 10,
            feed_epsilon: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub agents: Vec<AgentState>,
    pub food: Vec<Vec3>,
    pub cage: CageSpec,
    pub time_step: u64,
    pub dt: f64,
    /// Steps remaining before a dead agent respawns (respawn mode only).
    pub respawn_timers: Vec<u32>,
}

impl EnvState {
    pub fn alive_indices(&self) -> Vec<usize> {
        self.agents
            .iter()
            .enumerate()
            .filter_map(|(i, a)| a.alive.then_some(i))
            .collect()
    }

    pub fn alive_count(&self) -> usize {
        self.agents.iter().filter(|a| a.alive).count()
    }
}

/// Flags raised for one agent during one environment step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepFlags {
    pub boundary_collision: bool,
    pub agent_collision: bool,
    pub fed: bool,
    pub done: bool,
}

fn spawn_agent(cfg: &EnvConfig, rng: &mut ChaCha8Rng) -> AgentState {
    let h = cfg.cage.half_extents();
    let m = cfg.spawn_margin;
    let position = Vec3::new(
        rng.gen_range(-(h.x - m)..(h.x - m)),
        rng.gen_range(-(h.y - m)..(h.y - m)),
        rng.gen_range(-(h.z - m)..(h.z - m)),
    );
    let yaw = rng.gen_range(0.0..std::f64::consts::TAU);
    let rotation = UnitQuat::yaw(yaw);
    AgentState {
        position,
        forward: rotation.rotate(FORWARD),
        rotation,
        speed: rng.gen_range(cfg.limits.speed_min..=cfg.limits.speed_max),
        role: Role::Normal,
        alive: true,
    }
}

fn far_enough(p: Vec3, others: &[AgentState], min_sep: f64) -> bool {
    others.iter().all(|a| !a.alive || a.position.distance(p) >= min_sep)
}

/// Build a fresh environment with uniformly placed, separated agents.
pub fn init_environment(cfg: &EnvConfig, seed: u64) -> Result<EnvState> {
    assert!(cfg.agent_count >= 1, "agent count must be >= 1");
    assert!(
        cfg.cage.width > 0.0 && cfg.cage.depth > 0.0 && cfg.cage.height > 0.0,
        "cage dimensions must be positive"
    );
    let mut rng = rand::SeedableRng::seed_from_u64(seed);
    let mut agents: Vec<AgentState> = Vec::with_capacity(cfg.agent_count);
    let max_attempts = 200 * cfg.agent_count.max(1);
    let mut attempts = 0;
    while agents.len() < cfg.agent_count {
        if attempts >= max_attempts {
            return Err(CoreError::PlacementFailed {
                requested: cfg.agent_count,
                placed: agents.len(),
                min_separation: cfg.min_separation,
                attempts,
            });
        }
        attempts += 1;
        let candidate = spawn_agent(cfg, &mut rng);
        if far_enough(candidate.position, &agents, cfg.min_separation) {
            agents.push(candidate);
        }
    }
    Ok(EnvState {
        agents,
        food: Vec::new(),
        cage: cfg.cage,
        time_step: 0,
        dt: cfg.dt,
        respawn_timers: vec![0; cfg.agent_count],
    })
}

/// Advance one agent by one step. Returns the new state and whether the move
/// hit the cage boundary. The returned position is always strictly inside.
pub fn step_agent(
    state: &AgentState,
    action: &Action,
    dt: f64,
    cage: &CageSpec,
    limits: &Limits,
) -> Result<(AgentState, bool)> {
    if !action.is_finite() {
        return Err(CoreError::NonFiniteAction);
    }
    debug_assert!(dt > 0.0);
    let a = action.clamped(limits);

    // yaw about the world vertical, then pitch about the body lateral axis
    let q1 = UnitQuat::yaw(a.delta_yaw).mul(state.rotation);
    let lateral = q1.rotate(LATERAL);
    let rotation = UnitQuat::from_axis_angle(lateral, a.delta_pitch).mul(q1);
    let forward = rotation.rotate(FORWARD).normalized().expect("rotation of unit vector");

    let speed = (state.speed + a.delta_speed).clamp(limits.speed_min, limits.speed_max);
    let raw_position = state.position + forward * (speed * dt);

    let boundary = !cage.contains(raw_position);
    let position = if boundary { cage.clamp_inside(raw_position, 1e-6) } else { raw_position };

    Ok((
        AgentState { position, forward, rotation, speed, role: state.role, alive: state.alive },
        boundary,
    ))
}

/// Advance the whole school. `actions[k]` drives the k-th alive agent (in
/// index order). Collision rules follow the cage contract: boundary contact
/// and agent-agent proximity (< 2 body radii) both raise `done`.
pub fn step_environment(
    env: &EnvState,
    actions: &[Action],
    cfg: &EnvConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(EnvState, Vec<StepFlags>)> {
    let alive: Vec<usize> = env.alive_indices();
    if actions.len() != alive.len() {
        return Err(CoreError::ActionCountMismatch { expected: alive.len(), got: actions.len() });
    }

    let mut next = env.clone();
    let mut flags = vec![StepFlags::default(); env.agents.len()];

    // advance every alive agent from the time-t snapshot
    for (k, &i) in alive.iter().enumerate() {
        let (state, boundary) = step_agent(&env.agents[i], &actions[k], env.dt, &env.cage, &cfg.limits)?;
        next.agents[i] = state;
        flags[i].boundary_collision = boundary;
    }

    // pairwise collision on the advanced positions; symmetric by construction
    let collide_dist = 2.0 * cfg.body_radius;
    for ai in 0..alive.len() {
        for bi in (ai + 1)..alive.len() {
            let (i, j) = (alive[ai], alive[bi]);
            if next.agents[i].position.distance(next.agents[j].position) < collide_dist {
                flags[i].agent_collision = true;
                flags[j].agent_collision = true;
            }
        }
    }

    // food pickup: nearest contact within feed_epsilon consumes the item
    let mut eaten = vec![false; next.food.len()];
    for &i in &alive {
        for (fi, f) in next.food.iter().enumerate() {
            if !eaten[fi] && next.agents[i].position.distance(*f) < cfg.feed_epsilon {
                eaten[fi] = true;
                flags[i].fed = true;
            }
        }
    }
    next.food = next
        .food
        .iter()
        .zip(&eaten)
        .filter_map(|(f, &e)| (!e).then_some(*f))
        .collect();

    for &i in &alive {
        flags[i].done = flags[i].boundary_collision || flags[i].agent_collision;
    }

    match cfg.termination {
        Termination::Episode => {
            if alive.iter().any(|&i| flags[i].done) {
                for &i in &alive {
                    flags[i].done = true;
                }
            }
        }
        Termination::Respawn => {
            for &i in &alive {
                if flags[i].done {
                    next.agents[i].alive = false;
                    next.respawn_timers[i] = cfg.respawn_cooldown;
                }
            }
            // respawn agents whose cooldown has elapsed
            for i in 0..next.agents.len() {
                if !next.agents[i].alive {
                    if next.respawn_timers[i] > 0 {
                        next.respawn_timers[i] -= 1;
                    }
                    if next.respawn_timers[i] == 0 {
                        let role = next.agents[i].role;
                        for _ in 0..200 {
                            let cand = spawn_agent(cfg, rng);
                            if far_enough(cand.position, &next.agents, cfg.min_separation) {
                                next.agents[i] = AgentState { role, ..cand };
                                break;
                            }
                        }
                        // if no spot was free the agent waits another step
                    }
                }
            }
        }
    }

    next.time_step = env.time_step + 1;
    Ok((next, flags))
}

/// Alive agents within `radius` of agent `i` (excluding `i`), sorted by index.
pub fn neighbors(env: &EnvState, index: usize, radius: f64) -> Result<Vec<usize>> {
    if index >= env.agents.len() {
        return Err(CoreError::InvalidAgentIndex { index, count: env.agents.len() });
    }
    if radius <= 0.0 {
        return Err(CoreError::InvalidRadius(radius));
    }
    let p = env.agents[index].position;
    Ok(env
        .agents
        .iter()
        .enumerate()
        .filter(|(j, a)| *j != index && a.alive && a.position.distance(p) <= radius)
        .map(|(j, _)| j)
        .collect())
}

/// Append one food point uniformly distributed over the cage volume.
pub fn spawn_food(env: &mut EnvState, rng: &mut ChaCha8Rng) {
    let h = env.cage.half_extents();
    env.food.push(Vec3::new(
        rng.gen_range(-h.x..h.x),
        rng.gen_range(-h.y..h.y),
        rng.gen_range(-h.z..h.z),
    ));
}

/// Mark the first `floor(fraction * N)` agents as Dominant, the rest Subordinate.
pub fn assign_roles(env: &mut EnvState, dominant_fraction: f64) {
    assert!(dominant_fraction > 0.0 && dominant_fraction < 1.0, "fraction must be in (0,1)");
    let n_dom = (dominant_fraction * env.agents.len() as f64).floor() as usize;
    for (i, a) in env.agents.iter_mut().enumerate() {
        a.role = if i < n_dom { Role::Dominant } else { Role::Subordinate };
    }
}

/// One trajectory-log line per agent per step, as specified for the JSONL export.
pub fn trajectory_line(t: u64, id: usize, a: &AgentState, done: bool) -> String {
    let role = match a.role {
        Role::Normal => "normal",
        Role::Dominant => "dominant",
        Role::Subordinate => "subordinate",
    };
    serde_json::json!({
        "t": t,
        "id": id,
        "p": [a.position.x, a.position.y, a.position.z],
        "d": [a.forward.x, a.forward.y, a.forward.z],
        "q": [a.rotation.w, a.rotation.x, a.rotation.y, a.rotation.z],
        "v": a.speed,
        "role": role,
        "done": done,
    })
    .to_string()
}

pub fn unit_vector_up() -> Vec3 {
    UP
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn cfg() -> EnvConfig {
        EnvConfig::default()
    }

    #[test]
    fn init_places_agents_inside_with_bounds() {
        let env = init_environment(&cfg(), 7).unwrap();
        assert_eq!(env.agents.len(), 50);
        for a in &env.agents {
            assert!(a.alive);
            assert!(env.cage.contains(a.position));
            assert!(a.speed >= 0.8 && a.speed <= 1.5);
            assert!((a.forward.norm() - 1.0).abs() < 1e-6);
            assert!((a.rotation.norm() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn init_single_agent() {
        let mut c = cfg();
        c.agent_count = 1;
        let env = init_environment(&c, 0).unwrap();
        assert_eq!(env.agents.len(), 1);
        assert!(env.agents[0].speed >= 0.8 && env.agents[0].speed <= 1.5);
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_environment(&cfg(), 7).unwrap();
        let b = init_environment(&cfg(), 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn init_respects_min_separation() {
        let env = init_environment(&cfg(), 3).unwrap();
        for i in 0..env.agents.len() {
            for j in (i + 1)..env.agents.len() {
                assert!(env.agents[i].position.distance(env.agents[j].position) >= 0.5);
            }
        }
    }

    #[test]
    fn init_fails_when_cage_too_small() {
        let mut c = cfg();
        c.cage = CageSpec { width: 1.6, depth: 1.6, height: 1.6 };
        c.agent_count = 200;
        match init_environment(&c, 0) {
            Err(CoreError::PlacementFailed { .. }) => {}
            other => panic!("expected placement failure, got {other:?}"),
        }
    }

    fn mid_cage_agent() -> AgentState {
        AgentState {
            position: Vec3::ZERO,
            forward: FORWARD,
            rotation: UnitQuat::IDENTITY,
            speed: 1.0,
            role: Role::Normal,
            alive: true,
        }
    }

    #[test]
    fn zero_action_advances_along_forward() {
        let a = mid_cage_agent();
        let (next, boundary) =
            step_agent(&a, &Action::ZERO, 0.1, &CageSpec::default(), &Limits::default()).unwrap();
        assert!(!boundary);
        assert!((next.position - Vec3::new(0.1, 0.0, 0.0)).norm() < 1e-12);
        assert_eq!(next.speed, 1.0);
    }

    #[test]
    fn speed_clamps_at_upper_bound() {
        let mut a = mid_cage_agent();
        a.speed = 1.4;
        let mut lim = Limits::default();
        lim.max_delta_speed = 0.5;
        let act = Action { delta_speed: 0.5, delta_yaw: 0.0, delta_pitch: 0.0 };
        let (next, _) = step_agent(&a, &act, 0.1, &CageSpec::default(), &lim).unwrap();
        assert_eq!(next.speed, 1.5);
    }

    #[test]
    fn quarter_yaw_turns_forward_to_z() {
        let a = mid_cage_agent();
        let mut lim = Limits::default();
        lim.max_delta_yaw = 2.0;
        let act = Action { delta_speed: 0.0, delta_yaw: std::f64::consts::FRAC_PI_2, delta_pitch: 0.0 };
        let (next, _) = step_agent(&a, &act, 0.1, &CageSpec::default(), &lim).unwrap();
        assert!((next.forward - LATERAL).norm() < 1e-6, "forward {:?}", next.forward);
    }

    #[test]
    fn non_finite_action_rejected() {
        let a = mid_cage_agent();
        let act = Action { delta_speed: f64::NAN, delta_yaw: 0.0, delta_pitch: 0.0 };
        assert!(matches!(
            step_agent(&a, &act, 0.1, &CageSpec::default(), &Limits::default()),
            Err(CoreError::NonFiniteAction)
        ));
    }

    #[test]
    fn head_on_agents_both_done() {
        let mut c = cfg();
        c.agent_count = 2;
        c.termination = Termination::Episode;
        let mut env = init_environment(&c, 1).unwrap();
        env.agents[0].position = Vec3::new(-0.21, 0.0, 0.0);
        env.agents[0].rotation = UnitQuat::IDENTITY;
        env.agents[0].forward = FORWARD;
        env.agents[1].position = Vec3::new(0.21, 0.0, 0.0);
        env.agents[1].rotation = UnitQuat::yaw(std::f64::consts::PI);
        env.agents[1].forward = env.agents[1].rotation.rotate(FORWARD);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (_, flags) = step_environment(&env, &[Action::ZERO, Action::ZERO], &c, &mut rng).unwrap();
        assert!(flags[0].done && flags[1].done);
        assert!(flags[0].agent_collision && flags[1].agent_collision);
    }

    #[test]
    fn single_agent_mid_cage_not_done() {
        let mut c = cfg();
        c.agent_count = 1;
        let mut env = init_environment(&c, 2).unwrap();
        env.agents[0].position = Vec3::ZERO;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let act = Action { delta_speed: 0.01, delta_yaw: 0.01, delta_pitch: 0.0 };
        let (next, flags) = step_environment(&env, &[act], &c, &mut rng).unwrap();
        assert!(!flags[0].done);
        assert!(next.agents[0].alive);
    }

    #[test]
    fn trajectory_is_deterministic_over_100_steps() {
        let c = cfg();
        let run = |seed: u64| -> String {
            let mut env = init_environment(&c, seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xbeef);
            let mut log = String::new();
            for t in 0..100 {
                let alive = env.alive_count();
                let actions: Vec<Action> = (0..alive)
                    .map(|k| Action {
                        delta_speed: 0.01 * ((t + k) % 3) as f64 - 0.01,
                        delta_yaw: 0.05 * ((t * 7 + k) % 5) as f64 - 0.1,
                        delta_pitch: 0.01 * ((t + 2 * k) % 2) as f64,
                    })
                    .collect();
                let (next, flags) = step_environment(&env, &actions, &c, &mut rng).unwrap();
                for (i, a) in next.agents.iter().enumerate() {
                    log.push_str(&trajectory_line(next.time_step, i, a, flags[i].done));
                    log.push('\n');
                }
                env = next;
            }
            log
        };
        assert_eq!(run(7), run(7));
    }

    #[test]
    fn alive_agents_always_strictly_inside() {
        let c = cfg();
        let mut env = init_environment(&c, 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..300 {
            let alive = env.alive_count();
            // strong forward drive pushes agents into walls regularly
            let actions = vec![Action { delta_speed: 0.2, delta_yaw: 0.0, delta_pitch: 0.0 }; alive];
            let (next, _) = step_environment(&env, &actions, &c, &mut rng).unwrap();
            for a in next.agents.iter().filter(|a| a.alive) {
                assert!(next.cage.contains(a.position), "agent escaped at {:?}", a.position);
            }
            env = next;
        }
    }

    #[test]
    fn neighbor_radius_boundary() {
        let mut c = cfg();
        c.agent_count = 2;
        let mut env = init_environment(&c, 1).unwrap();
        env.agents[0].position = Vec3::ZERO;
        env.agents[1].position = Vec3::new(2.9, 0.0, 0.0);
        assert_eq!(neighbors(&env, 0, 3.0).unwrap(), vec![1]);
        assert_eq!(neighbors(&env, 1, 3.0).unwrap(), vec![0]);
        env.agents[1].position = Vec3::new(3.1, 0.0, 0.0);
        assert!(neighbors(&env, 0, 3.0).unwrap().is_empty());
    }

    #[test]
    fn neighbor_grid_hand_count() {
        let mut c = cfg();
        c.agent_count = 9;
        let mut env = init_environment(&c, 1).unwrap();
        let mut k = 0;
        for gx in -1..=1 {
            for gz in -1..=1 {
                env.agents[k].position = Vec3::new(2.0 * gx as f64, 0.0, 2.0 * gz as f64);
                k += 1;
            }
        }
        // center agent is the (0,0) grid slot, index 4
        let n = neighbors(&env, 4, 5.0).unwrap();
        assert_eq!(n, vec![0, 1, 2, 3, 5, 6, 7, 8]);
    }

    #[test]
    fn neighbor_invalid_index_errors() {
        let env = init_environment(&cfg(), 1).unwrap();
        assert!(matches!(neighbors(&env, 99, 3.0), Err(CoreError::InvalidAgentIndex { .. })));
    }

    #[test]
    fn food_spawns_inside_and_deterministically() {
        let c = cfg();
        let mut env = init_environment(&c, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        spawn_food(&mut env, &mut rng);
        assert_eq!(env.food.len(), 1);
        assert!(env.cage.contains(env.food[0]));

        let mut env2 = init_environment(&c, 1).unwrap();
        let mut rng2 = ChaCha8Rng::seed_from_u64(9);
        spawn_food(&mut env2, &mut rng2);
        assert_eq!(env.food, env2.food);
    }

    #[test]
    fn food_covers_all_octants() {
        let c = cfg();
        let mut env = init_environment(&c, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut counts = [0usize; 8];
        for _ in 0..100 {
            spawn_food(&mut env, &mut rng);
            let f = *env.food.last().unwrap();
            let oct = ((f.x > 0.0) as usize) | (((f.y > 0.0) as usize) << 1) | (((f.z > 0.0) as usize) << 2);
            counts[oct] += 1;
        }
        // chi-square against uniform, 7 dof: 14.07 at the 5% level; use a
        // generous fixed-seed bound to keep the check meaningful but stable
        let expected = 100.0 / 8.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < 14.07, "chi2 = {chi2}, counts {counts:?}");
    }

    #[test]
    fn roles_split_floor_fraction() {
        let c = cfg();
        let mut env = init_environment(&c, 1).unwrap();
        assign_roles(&mut env, 0.1);
        assert_eq!(env.agents.iter().filter(|a| a.role == Role::Dominant).count(), 5);
        assert_eq!(env.agents.iter().filter(|a| a.role == Role::Subordinate).count(), 45);

        assign_roles(&mut env, 0.02);
        assert_eq!(env.agents.iter().filter(|a| a.role == Role::Dominant).count(), 1);
        assert_eq!(env.agents.iter().filter(|a| a.role == Role::Normal).count(), 0);
    }

    #[test]
    fn double_buffering_is_order_independent() {
        // Advancing agents from the snapshot in any order must give the same
        // result; emulate a permuted schedule with direct step_agent calls.
        let c = cfg();
        let env = init_environment(&c, 21).unwrap();
        let actions: Vec<Action> = (0..env.agents.len())
            .map(|k| Action {
                delta_speed: 0.05 * ((k % 4) as f64 - 1.5),
                delta_yaw: 0.1 * ((k % 3) as f64 - 1.0),
                delta_pitch: 0.02,
            })
            .collect();
        let forward: Vec<AgentState> = (0..env.agents.len())
            .map(|i| step_agent(&env.agents[i], &actions[i], env.dt, &env.cage, &c.limits).unwrap().0)
            .collect();
        let mut reversed = vec![forward[0]; env.agents.len()];
        for i in (0..env.agents.len()).rev() {
            reversed[i] =
                step_agent(&env.agents[i], &actions[i], env.dt, &env.cage, &c.limits).unwrap().0;
        }
        assert_eq!(forward, reversed);
    }

    #[test]
    fn speed_stays_in_band_under_random_actions() {
        let c = cfg();
        let mut env = init_environment(&c, 13).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut action_rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..200 {
            let alive = env.alive_count();
            let actions: Vec<Action> = (0..alive)
                .map(|_| Action {
                    delta_speed: action_rng.gen_range(-0.4..0.4),
                    delta_yaw: action_rng.gen_range(-0.5..0.5),
                    delta_pitch: action_rng.gen_range(-0.3..0.3),
                })
                .collect();
            let (next, _) = step_environment(&env, &actions, &c, &mut rng).unwrap();
            for a in next.agents.iter().filter(|a| a.alive) {
                assert!(a.speed >= 0.8 - 1e-12 && a.speed <= 1.5 + 1e-12);
                assert!((a.forward.norm() - 1.0).abs() < 1e-6);
                assert!((a.rotation.norm() - 1.0).abs() < 1e-6);
            }
            env = next;
        }
    }
}
