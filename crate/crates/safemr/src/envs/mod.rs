//! Deterministic simulated environments with distance features.
//!
//! Two families share one contract (`reset` / `step` / `observe` /
//! `features`): a pairwise aircraft-avoidance task in relative coordinates,
//! and 2-D kinematic particle tasks (reach a goal, or push a box to a goal)
//! among hazard or pillar obstacles. Every step reports the nearest-obstacle
//! distance `d`, its closed-form time derivative `d_dot`, and an exact
//! violation flag `d' < d_min`, which is what the certificate machinery
//! consumes. Environments are value-like: stepping is a pure function of
//! `(state, action, config)`, bit-exact and cloneable.

pub mod aircraft;
pub mod particle;

use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

use crate::error::SafemrError;
use crate::safety_index::DistanceFeature;
use crate::Result;

/// Obstacle distances report this value when no obstacle is in range.
pub const SENSOR_RANGE: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Aircraft,
    Goal,
    Push,
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Aircraft => "aircraft",
            Task::Goal => "goal",
            Task::Push => "push",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObstacleKind {
    /// Virtual obstacle: the robot passes through, violations accumulate.
    Hazard,
    /// Physical obstacle: penetration is resolved by projecting the robot
    /// back to the surface (the violation is still recorded).
    Pillar,
}

/// Environment parameters; a section of the experiment config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub task: Task,
    pub obstacle_kind: ObstacleKind,
    pub obstacle_radius: f64,
    pub obstacle_count: usize,
    pub dt: f64,
    pub horizon: usize,
    /// Symmetric per-dimension action bound (actions are clamped into
    /// `[-action_limit, action_limit]`).
    pub action_limit: f64,
    /// Particle speed scale: commanded velocity = action * robot_speed.
    pub robot_speed: f64,
    pub ego_speed: f64,
    pub intruder_speed: f64,
    pub d_min: f64,
    pub arena_half_width: f64,
    pub robot_radius: f64,
    pub goal_radius: f64,
    pub box_radius: f64,
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            task: Task::Goal,
            obstacle_kind: ObstacleKind::Pillar,
            obstacle_radius: 0.15,
            obstacle_count: 4,
            dt: 0.05,
            horizon: 500,
            action_limit: 1.0,
            robot_speed: 1.0,
            ego_speed: 1.0,
            intruder_speed: 1.0,
            d_min: 0.15,
            arena_half_width: 2.0,
            robot_radius: 0.05,
            goal_radius: 0.2,
            box_radius: 0.15,
            seed: 0,
        }
    }
}

impl EnvConfig {
    /// Defaults for the aircraft task: unit speeds, turn rate in [-1, 1],
    /// d_min 0.5, dt 0.1, reset radius 3.
    pub fn aircraft() -> Self {
        Self {
            task: Task::Aircraft,
            obstacle_count: 0,
            dt: 0.1,
            horizon: 200,
            d_min: 0.5,
            arena_half_width: 3.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(SafemrError::Config("horizon must be positive".into()));
        }
        if !(self.dt > 0.0) {
            return Err(SafemrError::Config("dt must be positive".into()));
        }
        if !(self.d_min > 0.0) {
            return Err(SafemrError::Config("d_min must be positive".into()));
        }
        if self.task != Task::Aircraft {
            let r = self.obstacle_radius;
            if !((r - 0.15).abs() < 1e-9 || (r - 0.30).abs() < 1e-9) {
                return Err(SafemrError::Config(format!(
                    "obstacle_radius must be 0.15 or 0.30, got {r}"
                )));
            }
        }
        Ok(())
    }

    pub fn obs_dim(&self) -> usize {
        match self.task {
            Task::Aircraft => 6,
            Task::Goal => 8,
            Task::Push => 10,
        }
    }

    pub fn action_dim(&self) -> usize {
        match self.task {
            Task::Aircraft => 1,
            Task::Goal | Task::Push => 2,
        }
    }
}

/// A disc obstacle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub center: [f64; 2],
    pub radius: f64,
}

/// Task-specific simulation state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EnvState {
    Aircraft(aircraft::AircraftState),
    Particle(particle::ParticleState),
}

impl EnvState {
    pub fn time(&self) -> usize {
        match self {
            EnvState::Aircraft(s) => s.t,
            EnvState::Particle(s) => s.t,
        }
    }

    /// Flat state components for trajectory export.
    pub fn flat(&self) -> Vec<f64> {
        match self {
            EnvState::Aircraft(s) => vec![s.x, s.y, s.psi],
            EnvState::Particle(s) => {
                let mut v = vec![s.pos[0], s.pos[1], s.vel[0], s.vel[1], s.goal[0], s.goal[1]];
                if let Some(b) = s.box_pos {
                    v.push(b[0]);
                    v.push(b[1]);
                }
                v
            }
        }
    }
}

/// Result of one simulation step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_state: EnvState,
    pub reward: f64,
    /// Exact flag: next-state nearest-obstacle distance fell below d_min.
    pub violation: bool,
    pub features_now: DistanceFeature,
    pub features_next: DistanceFeature,
    pub done: bool,
}

/// Deterministic initial state for `(cfg, seed)`; placement avoids any
/// initial violation by rejection sampling.
pub fn reset(cfg: &EnvConfig, seed: u64) -> Result<EnvState> {
    cfg.validate()?;
    match cfg.task {
        Task::Aircraft => aircraft::reset(cfg, seed).map(EnvState::Aircraft),
        Task::Goal | Task::Push => particle::reset(cfg, seed).map(EnvState::Particle),
    }
}

/// Advances the simulation by one step; actions are clamped into bounds.
pub fn step(state: &EnvState, action: &[f64], cfg: &EnvConfig) -> Result<StepResult> {
    match state {
        EnvState::Aircraft(s) => aircraft::step(s, action, cfg),
        EnvState::Particle(s) => particle::step(s, action, cfg),
    }
}

/// Nearest-obstacle distance feature of a state. The distance is capped at
/// [`SENSOR_RANGE`] (with `d_dot = 0` beyond it) and floored for the
/// certificate math; the raw distance used for violation flags is
/// [`raw_min_distance`].
pub fn features(state: &EnvState, cfg: &EnvConfig) -> DistanceFeature {
    match state {
        EnvState::Aircraft(s) => aircraft::features(s, cfg),
        EnvState::Particle(s) => particle::features(s, cfg),
    }
}

/// Uncapped surface distance to the nearest obstacle (`+inf` when there is
/// none; negative inside a hazard).
pub fn raw_min_distance(state: &EnvState, cfg: &EnvConfig) -> f64 {
    match state {
        EnvState::Aircraft(s) => aircraft::raw_distance(s),
        EnvState::Particle(s) => {
            particle::nearest_obstacle(s, cfg).map_or(f64::INFINITY, |(_, d)| d)
        }
    }
}

/// Fixed-length observation vector for the policy.
pub fn observe(state: &EnvState, cfg: &EnvConfig) -> Vec<f64> {
    match state {
        EnvState::Aircraft(s) => aircraft::observe(s, cfg),
        EnvState::Particle(s) => particle::observe(s, cfg),
    }
}

/// SplitMix64: small deterministic generator carried inside particle states
/// so goal resampling keeps `step` a pure function of `(state, action)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitMix64(pub u64);

impl SplitMix64 {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }
}

/// Streams trajectory rows to a CSV file:
/// `t, <state...>, <action...>, reward, d, d_dot, violation`.
pub struct TrajectoryWriter {
    out: std::io::BufWriter<std::fs::File>,
}

impl TrajectoryWriter {
    pub fn create(path: &Path, cfg: &EnvConfig, initial: &EnvState) -> Result<Self> {
        let file = std::fs::File::create(path)?;
        let mut out = std::io::BufWriter::new(file);
        if let EnvState::Particle(s) = initial {
            let obs: Vec<String> = s
                .obstacles
                .iter()
                .map(|o| format!("{}:{}:{}", o.center[0], o.center[1], o.radius))
                .collect();
            writeln!(out, "# task={} obstacles={}", cfg.task.name(), obs.join("|"))?;
        } else {
            writeln!(out, "# task={}", cfg.task.name())?;
        }
        let state_cols = match cfg.task {
            Task::Aircraft => "x,y,psi".to_string(),
            Task::Goal => "rx,ry,vx,vy,gx,gy".to_string(),
            Task::Push => "rx,ry,vx,vy,gx,gy,bx,by".to_string(),
        };
        let act_cols: Vec<String> = (0..cfg.action_dim()).map(|i| format!("a{i}")).collect();
        writeln!(out, "t,{state_cols},{},reward,d,d_dot,violation", act_cols.join(","))?;
        Ok(Self { out })
    }

    pub fn record(&mut self, state: &EnvState, action: &[f64], res: &StepResult) -> Result<()> {
        let mut cols: Vec<String> = Vec::new();
        cols.push(state.time().to_string());
        for v in state.flat() {
            cols.push(format!("{v}"));
        }
        for a in action {
            cols.push(format!("{a}"));
        }
        cols.push(format!("{}", res.reward));
        cols.push(format!("{}", res.features_next.d));
        cols.push(format!("{}", res.features_next.d_dot));
        cols.push(if res.violation { "1".into() } else { "0".into() });
        writeln!(self.out, "{}", cols.join(","))?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_is_deterministic() {
        for cfg in [EnvConfig::default(), EnvConfig::aircraft()] {
            let a = reset(&cfg, 12345).unwrap();
            let b = reset(&cfg, 12345).unwrap();
            assert_eq!(a, b);
            let c = reset(&cfg, 12346).unwrap();
            assert_ne!(a, c);
        }
    }

    #[test]
    fn step_is_bit_exact_on_identical_inputs() {
        let cfg = EnvConfig::default();
        let s = reset(&cfg, 7).unwrap();
        let r1 = step(&s, &[0.3, -0.8], &cfg).unwrap();
        let r2 = step(&s, &[0.3, -0.8], &cfg).unwrap();
        assert_eq!(r1, r2);
    }

    #[test]
    fn no_obstacles_reports_sensor_range_sentinel() {
        let cfg = EnvConfig { obstacle_count: 0, ..EnvConfig::default() };
        let s = reset(&cfg, 3).unwrap();
        let f = features(&s, &cfg);
        assert_eq!(f.d, SENSOR_RANGE);
        assert_eq!(f.d_dot, 0.0);
        assert!(raw_min_distance(&s, &cfg).is_infinite());
    }

    #[test]
    fn thousand_resets_have_no_initial_violation() {
        let cfg = EnvConfig::default();
        for seed in 0..1000 {
            let s = reset(&cfg, seed).unwrap();
            let d = raw_min_distance(&s, &cfg);
            assert!(d >= cfg.d_min, "seed {seed}: initial d = {d}");
        }
    }

    #[test]
    fn observation_dims_match_task() {
        for (cfg, dim) in [
            (EnvConfig::aircraft(), 6),
            (EnvConfig::default(), 8),
            (EnvConfig { task: Task::Push, ..EnvConfig::default() }, 10),
        ] {
            let s = reset(&cfg, 11).unwrap();
            assert_eq!(observe(&s, &cfg).len(), dim);
            assert_eq!(cfg.obs_dim(), dim);
        }
    }

    #[test]
    fn observations_stay_finite_under_random_rollouts() {
        let mut rng = SplitMix64(99);
        for task in [Task::Aircraft, Task::Goal, Task::Push] {
            let cfg = match task {
                Task::Aircraft => EnvConfig::aircraft(),
                t => EnvConfig { task: t, ..EnvConfig::default() },
            };
            let mut state = reset(&cfg, 5).unwrap();
            let adim = cfg.action_dim();
            let mut steps = 0usize;
            let mut episode = 0u64;
            while steps < 100_000 {
                let action: Vec<f64> = (0..adim).map(|_| rng.range(-1.2, 1.2)).collect();
                let res = step(&state, &action, &cfg).unwrap();
                let obs = observe(&res.next_state, &cfg);
                assert!(obs.iter().all(|v| v.is_finite()), "non-finite obs at step {steps}");
                state = if res.done {
                    episode += 1;
                    reset(&cfg, 1000 + episode).unwrap()
                } else {
                    res.next_state
                };
                steps += 1;
            }
        }
    }
}
