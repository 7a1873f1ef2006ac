//! 2-D kinematic particle tasks: reach a goal, or push a box to a goal,
//! among hazard or pillar obstacles.
//!
//! The robot is a velocity-commanded disc: `position += clamp(action) *
//! robot_speed * dt`. Pillars resolve penetration by projecting the robot
//! back to the pillar surface (the violation is still recorded); hazards
//! are pass-through. In the push task the box translates with the robot's
//! penetration vector when the two discs overlap. Goal arrivals pay a
//! bonus and resample the goal through a generator carried in the state,
//! keeping `step` a pure function of `(state, action, config)`.

use serde::{Deserialize, Serialize};

use super::{EnvConfig, EnvState, Obstacle, SplitMix64, StepResult, Task, SENSOR_RANGE};
use crate::error::SafemrError;
use crate::safety_index::DistanceFeature;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleState {
    pub pos: [f64; 2],
    pub vel: [f64; 2],
    pub goal: [f64; 2],
    pub obstacles: Vec<Obstacle>,
    /// Present only in the push task.
    pub box_pos: Option<[f64; 2]>,
    pub t: usize,
    /// Deterministic generator for goal resampling.
    pub rng: SplitMix64,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Index and surface distance of the nearest obstacle (ties break toward
/// the lower index).
pub fn nearest_obstacle(s: &ParticleState, cfg: &EnvConfig) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, o) in s.obstacles.iter().enumerate() {
        let d = dist(s.pos, o.center) - o.radius - cfg.robot_radius;
        if best.map_or(true, |(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best
}

pub fn features(s: &ParticleState, cfg: &EnvConfig) -> DistanceFeature {
    feature_from(s, nearest_obstacle(s, cfg))
}

fn feature_from(s: &ParticleState, nearest: Option<(usize, f64)>) -> DistanceFeature {
    match nearest {
        None => DistanceFeature::new(SENSOR_RANGE, 0.0),
        Some((i, d)) if d < SENSOR_RANGE => {
            let o = &s.obstacles[i];
            let center_range = dist(s.pos, o.center);
            if center_range < 1e-9 {
                return DistanceFeature::new(d, 0.0);
            }
            // d/dt ||p - c|| for a static obstacle; radii are constant so
            // the surface distance has the same derivative.
            let d_dot = ((s.pos[0] - o.center[0]) * s.vel[0]
                + (s.pos[1] - o.center[1]) * s.vel[1])
                / center_range;
            DistanceFeature::new(d, d_dot)
        }
        Some(_) => DistanceFeature::new(SENSOR_RANGE, 0.0),
    }
}

pub fn observe(s: &ParticleState, cfg: &EnvConfig) -> Vec<f64> {
    let nearest = nearest_obstacle(s, cfg);
    let f = feature_from(s, nearest);
    let mut obs = vec![
        s.goal[0] - s.pos[0],
        s.goal[1] - s.pos[1],
        s.vel[0],
        s.vel[1],
        f.d,
        f.d_dot,
    ];
    match nearest {
        Some((i, d)) if d < SENSOR_RANGE => {
            let o = &s.obstacles[i];
            let r = dist(s.pos, o.center).max(1e-9);
            obs.push((o.center[0] - s.pos[0]) / r);
            obs.push((o.center[1] - s.pos[1]) / r);
        }
        _ => {
            obs.push(0.0);
            obs.push(0.0);
        }
    }
    if let Some(b) = s.box_pos {
        obs.push(b[0] - s.pos[0]);
        obs.push(b[1] - s.pos[1]);
    } else if cfg.task == Task::Push {
        obs.push(0.0);
        obs.push(0.0);
    }
    obs
}

struct Sampler<'a> {
    rng: &'a mut SplitMix64,
    lo: f64,
    hi: f64,
}

impl<'a> Sampler<'a> {
    fn point(&mut self) -> [f64; 2] {
        [self.rng.range(self.lo, self.hi), self.rng.range(self.lo, self.hi)]
    }

    fn point_where(
        &mut self,
        tries: &mut usize,
        ok: impl Fn([f64; 2]) -> bool,
    ) -> Result<[f64; 2]> {
        loop {
            if *tries == 0 {
                return Err(SafemrError::Placement { tries: 10_000 });
            }
            *tries -= 1;
            let p = self.point();
            if ok(p) {
                return Ok(p);
            }
        }
    }
}

fn clear_of_obstacles(p: [f64; 2], obstacles: &[Obstacle], margin: f64) -> bool {
    obstacles.iter().all(|o| dist(p, o.center) - o.radius >= margin)
}

pub fn reset(cfg: &EnvConfig, seed: u64) -> Result<ParticleState> {
    let mut rng = SplitMix64(seed ^ 0x9A37_0001);
    let margin = cfg.arena_half_width - 0.3;
    let mut tries = 10_000usize;

    let mut obstacles: Vec<Obstacle> = Vec::with_capacity(cfg.obstacle_count);
    {
        let mut s = Sampler { rng: &mut rng, lo: -margin, hi: margin };
        for _ in 0..cfg.obstacle_count {
            let sep = 2.0 * cfg.obstacle_radius + 0.7;
            let c = s.point_where(&mut tries, |p| {
                obstacles.iter().all(|o| dist(p, o.center) >= sep)
            })?;
            obstacles.push(Obstacle { center: c, radius: cfg.obstacle_radius });
        }
    }

    let robot_clear = cfg.robot_radius + cfg.d_min + 0.1;
    let pos = {
        let mut s = Sampler { rng: &mut rng, lo: -margin, hi: margin };
        s.point_where(&mut tries, |p| clear_of_obstacles(p, &obstacles, robot_clear))?
    };

    let goal = sample_goal(&mut rng, cfg, &obstacles, pos, &mut tries)?;

    let box_pos = if cfg.task == Task::Push {
        let mut s = Sampler { rng: &mut rng, lo: -margin, hi: margin };
        let b = s.point_where(&mut tries, |p| {
            clear_of_obstacles(p, &obstacles, cfg.box_radius + cfg.d_min + 0.1)
                && dist(p, pos) >= cfg.robot_radius + cfg.box_radius + 0.1
                && dist(p, goal) >= 0.5
        })?;
        Some(b)
    } else {
        None
    };

    Ok(ParticleState { pos, vel: [0.0, 0.0], goal, obstacles, box_pos, t: 0, rng })
}

fn sample_goal(
    rng: &mut SplitMix64,
    cfg: &EnvConfig,
    obstacles: &[Obstacle],
    away_from: [f64; 2],
    tries: &mut usize,
) -> Result<[f64; 2]> {
    let margin = cfg.arena_half_width - 0.3;
    let mut s = Sampler { rng, lo: -margin, hi: margin };
    s.point_where(tries, |p| {
        clear_of_obstacles(p, obstacles, cfg.goal_radius + 0.15) && dist(p, away_from) >= 1.0
    })
}

/// A canonical probe state for grid sweeps: one obstacle at the origin,
/// the robot at `pos` with zero velocity, the goal far out of the way.
pub fn probe_state(cfg: &EnvConfig, pos: [f64; 2]) -> ParticleState {
    let w = cfg.arena_half_width;
    ParticleState {
        pos,
        vel: [0.0, 0.0],
        goal: [w - 0.3, w - 0.3],
        obstacles: vec![Obstacle { center: [0.0, 0.0], radius: cfg.obstacle_radius }],
        box_pos: None,
        t: 0,
        rng: SplitMix64(0),
    }
}

fn project_out_of_pillars(p: &mut [f64; 2], radius: f64, obstacles: &[Obstacle]) {
    // A few passes handle the rare case where one projection pushes the
    // disc into a neighboring pillar.
    for _ in 0..8 {
        let mut clean = true;
        for o in obstacles {
            let keep = o.radius + radius;
            let r = dist(*p, o.center);
            if r < keep {
                clean = false;
                if r < 1e-9 {
                    p[0] = o.center[0] + keep;
                    p[1] = o.center[1];
                } else {
                    let scale = keep / r;
                    p[0] = o.center[0] + (p[0] - o.center[0]) * scale;
                    p[1] = o.center[1] + (p[1] - o.center[1]) * scale;
                }
            }
        }
        if clean {
            break;
        }
    }
}

pub fn step(s: &ParticleState, action: &[f64], cfg: &EnvConfig) -> Result<StepResult> {
    let lim = cfg.action_limit;
    let ax = action.first().copied().unwrap_or(0.0).clamp(-lim, lim);
    let ay = action.get(1).copied().unwrap_or(0.0).clamp(-lim, lim);
    let vel = [ax * cfg.robot_speed, ay * cfg.robot_speed];

    let w = cfg.arena_half_width;
    let mut pos = [
        (s.pos[0] + vel[0] * cfg.dt).clamp(-w, w),
        (s.pos[1] + vel[1] * cfg.dt).clamp(-w, w),
    ];

    if cfg.obstacle_kind == super::ObstacleKind::Pillar {
        project_out_of_pillars(&mut pos, cfg.robot_radius, &s.obstacles);
    }

    let mut box_pos = s.box_pos;
    if let Some(b) = box_pos.as_mut() {
        let keep = cfg.robot_radius + cfg.box_radius;
        let r = dist(pos, *b);
        if r < keep {
            if r < 1e-9 {
                b[0] = pos[0] + keep;
            } else {
                let scale = keep / r;
                b[0] = pos[0] + (b[0] - pos[0]) * scale;
                b[1] = pos[1] + (b[1] - pos[1]) * scale;
            }
        }
        b[0] = b[0].clamp(-w + cfg.box_radius, w - cfg.box_radius);
        b[1] = b[1].clamp(-w + cfg.box_radius, w - cfg.box_radius);
        if cfg.obstacle_kind == super::ObstacleKind::Pillar {
            project_out_of_pillars(b, cfg.box_radius, &s.obstacles);
        }
    }

    if pos.iter().chain(vel.iter()).any(|v| !v.is_finite()) {
        return Err(SafemrError::NumericFault("particle state became non-finite".into()));
    }

    let mut next = ParticleState {
        pos,
        vel,
        goal: s.goal,
        obstacles: s.obstacles.clone(),
        box_pos,
        t: s.t + 1,
        rng: s.rng,
    };

    // Progress shaping plus an arrival bonus; arrivals resample the goal.
    let mut reward;
    match cfg.task {
        Task::Push if next.box_pos.is_some() => {
            let b_prev = s.box_pos.unwrap();
            let b_now = next.box_pos.unwrap();
            reward = dist(b_prev, s.goal) - dist(b_now, s.goal);
            if dist(b_now, s.goal) <= cfg.goal_radius {
                reward += 1.0;
                let mut tries = 10_000usize;
                next.goal = sample_goal(&mut next.rng, cfg, &next.obstacles, b_now, &mut tries)?;
            }
        }
        _ => {
            reward = dist(s.pos, s.goal) - dist(next.pos, s.goal);
            if dist(next.pos, s.goal) <= cfg.goal_radius {
                reward += 1.0;
                let mut tries = 10_000usize;
                next.goal =
                    sample_goal(&mut next.rng, cfg, &next.obstacles, next.pos, &mut tries)?;
            }
        }
    }

    let features_now = feature_from(s, nearest_obstacle(s, cfg));
    let features_next = feature_from(&next, nearest_obstacle(&next, cfg));
    let violation = nearest_obstacle(&next, cfg).map_or(false, |(_, d)| d < cfg.d_min);
    let done = next.t >= cfg.horizon;

    Ok(StepResult {
        next_state: EnvState::Particle(next),
        reward,
        violation,
        features_now,
        features_next,
        done,
    })
}
