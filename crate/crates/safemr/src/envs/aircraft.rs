//! Pairwise aircraft avoidance in relative coordinates.
//!
//! The state is the intruder's position `(x, y)` in the ego frame plus the
//! heading difference `psi`. The ego controls its turn rate; the intruder
//! flies straight at constant speed:
//!
//! ```text
//! x' = -v_e + v_p cos(psi) + w y
//! y' =  v_p sin(psi)       - w x
//! psi' = -w
//! ```
//!
//! integrated with RK4 under a zero-order hold on `w`. The distance feature
//! is the inter-aircraft range; its derivative is independent of the turn
//! rate (rotation of the relative frame preserves range), so `d_dot` is a
//! pure state property here. The reset radius bounds initial placements;
//! the relative position may drift beyond it as the aircraft separate.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::{EnvConfig, EnvState, SplitMix64, StepResult, SENSOR_RANGE};
use crate::error::SafemrError;
use crate::safety_index::DistanceFeature;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AircraftState {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub t: usize,
}

/// Wraps an angle to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

pub fn reset(cfg: &EnvConfig, seed: u64) -> Result<AircraftState> {
    let mut rng = SplitMix64(seed ^ 0xA1C7_0000);
    let r = cfg.arena_half_width;
    for _ in 0..10_000 {
        let x = rng.range(-r, r);
        let y = rng.range(-r, r);
        let psi = rng.range(-PI, PI);
        if x * x + y * y <= r * r && (x * x + y * y).sqrt() >= cfg.d_min + 0.05 {
            return Ok(AircraftState { x, y, psi: wrap_angle(psi), t: 0 });
        }
    }
    Err(SafemrError::Placement { tries: 10_000 })
}

fn derivs(s: [f64; 3], omega: f64, cfg: &EnvConfig) -> [f64; 3] {
    let (x, y, psi) = (s[0], s[1], s[2]);
    [
        -cfg.ego_speed + cfg.intruder_speed * psi.cos() + omega * y,
        cfg.intruder_speed * psi.sin() - omega * x,
        -omega,
    ]
}

fn rk4(s: [f64; 3], omega: f64, dt: f64, cfg: &EnvConfig) -> [f64; 3] {
    let k1 = derivs(s, omega, cfg);
    let mid1 = [s[0] + 0.5 * dt * k1[0], s[1] + 0.5 * dt * k1[1], s[2] + 0.5 * dt * k1[2]];
    let k2 = derivs(mid1, omega, cfg);
    let mid2 = [s[0] + 0.5 * dt * k2[0], s[1] + 0.5 * dt * k2[1], s[2] + 0.5 * dt * k2[2]];
    let k3 = derivs(mid2, omega, cfg);
    let end = [s[0] + dt * k3[0], s[1] + dt * k3[1], s[2] + dt * k3[2]];
    let k4 = derivs(end, omega, cfg);
    let mut out = [0.0; 3];
    for i in 0..3 {
        out[i] = s[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

pub fn raw_distance(s: &AircraftState) -> f64 {
    (s.x * s.x + s.y * s.y).sqrt()
}

pub fn features(s: &AircraftState, cfg: &EnvConfig) -> DistanceFeature {
    let d = raw_distance(s);
    if d >= SENSOR_RANGE {
        return DistanceFeature::new(SENSOR_RANGE, 0.0);
    }
    if d < 1e-9 {
        return DistanceFeature::new(d, 0.0);
    }
    // Range rate at zero turn rate; the omega terms cancel in x x' + y y'.
    let vx = -cfg.ego_speed + cfg.intruder_speed * s.psi.cos();
    let vy = cfg.intruder_speed * s.psi.sin();
    DistanceFeature::new(d, (s.x * vx + s.y * vy) / d)
}

pub fn observe(s: &AircraftState, cfg: &EnvConfig) -> Vec<f64> {
    let f = features(s, cfg);
    vec![s.x, s.y, s.psi.sin(), s.psi.cos(), f.d, f.d_dot]
}

pub fn step(s: &AircraftState, action: &[f64], cfg: &EnvConfig) -> Result<StepResult> {
    let omega = action
        .first()
        .copied()
        .unwrap_or(0.0)
        .clamp(-cfg.action_limit, cfg.action_limit);
    let next = rk4([s.x, s.y, s.psi], omega, cfg.dt, cfg);
    if next.iter().any(|v| !v.is_finite()) {
        return Err(SafemrError::NumericFault("aircraft state became non-finite".into()));
    }
    let next_state =
        AircraftState { x: next[0], y: next[1], psi: wrap_angle(next[2]), t: s.t + 1 };
    let features_now = features(s, cfg);
    let features_next = features(&next_state, cfg);
    let violation = raw_distance(&next_state) < cfg.d_min;
    // Control-effort penalty: the L2 norm of the action, negated so that
    // maximizing return minimizes effort.
    let reward = -omega.abs();
    let done = next_state.t >= cfg.horizon;
    Ok(StepResult {
        next_state: EnvState::Aircraft(next_state),
        reward,
        violation,
        features_now,
        features_next,
        done,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn head_on(cfg: &EnvConfig, d0: f64) -> AircraftState {
        // Intruder dead ahead, flying straight at the ego.
        AircraftState { x: d0, y: 0.0, psi: PI, t: 0 }
    }

    #[test]
    fn head_on_closing_rate_is_sum_of_speeds() {
        let cfg = EnvConfig::aircraft();
        let d0 = 2.0 * (cfg.ego_speed + cfg.intruder_speed) * cfg.dt;
        let s = head_on(&cfg, d0);
        let f = features(&s, &cfg);
        assert!((f.d_dot + (cfg.ego_speed + cfg.intruder_speed)).abs() < 1e-12);
        let res = step(&s, &[0.0], &cfg).unwrap();
        // Collinear head-on geometry is linear, so RK4 is exact: the range
        // shrinks by exactly (v_e + v_p) dt.
        let d1 = raw_distance(match &res.next_state {
            EnvState::Aircraft(a) => a,
            _ => unreachable!(),
        });
        let expected = d0 - (cfg.ego_speed + cfg.intruder_speed) * cfg.dt;
        assert!((d1 - expected).abs() < 1e-12, "d1 = {d1}, expected {expected}");
        assert!(res.violation);
    }

    #[test]
    fn range_rate_matches_finite_difference() {
        let cfg = EnvConfig { dt: 0.02, ..EnvConfig::aircraft() };
        let mut rng = SplitMix64(17);
        for _ in 0..200 {
            let s = AircraftState {
                x: rng.range(-2.5, 2.5),
                y: rng.range(-2.5, 2.5),
                psi: rng.range(-PI, PI),
                t: 0,
            };
            let d = raw_distance(&s);
            if !(0.3..4.0).contains(&d) {
                continue;
            }
            let omega = rng.range(-1.0, 1.0);
            let res = step(&s, &[omega], &cfg).unwrap();
            let f = features(&s, &cfg);
            let fd = (res.features_next.d - f.d) / cfg.dt;
            if f.d_dot.abs() < 0.05 {
                continue; // relative error is meaningless near zero rate
            }
            let rel = (fd - f.d_dot).abs() / f.d_dot.abs();
            assert!(rel < 0.05, "fd {fd} vs analytic {} at {s:?}", f.d_dot);
        }
    }

    #[test]
    fn range_change_respects_speed_bound() {
        let cfg = EnvConfig::aircraft();
        let mut rng = SplitMix64(23);
        for _ in 0..500 {
            let s = AircraftState {
                x: rng.range(-3.0, 3.0),
                y: rng.range(-3.0, 3.0),
                psi: rng.range(-PI, PI),
                t: 0,
            };
            let omega = rng.range(-1.0, 1.0);
            let res = step(&s, &[omega], &cfg).unwrap();
            let d0 = raw_distance(&s);
            let d1 = match &res.next_state {
                EnvState::Aircraft(a) => raw_distance(a),
                _ => unreachable!(),
            };
            let bound =
                (cfg.ego_speed + cfg.intruder_speed + omega.abs() * d0) * cfg.dt + 1e-6;
            assert!((d1 - d0).abs() <= bound, "|change| {} > bound {bound}", (d1 - d0).abs());
        }
    }

    #[test]
    fn intruder_speed_is_conserved_in_ego_frame() {
        // With zero turn rate the relative velocity must have magnitude
        // sqrt(v_e^2 + v_p^2 - 2 v_e v_p cos psi) for any psi.
        let cfg = EnvConfig::aircraft();
        let mut rng = SplitMix64(31);
        for _ in 0..100 {
            let s = AircraftState {
                x: rng.range(-2.0, 2.0),
                y: rng.range(-2.0, 2.0),
                psi: rng.range(-PI, PI),
                t: 0,
            };
            let res = step(&s, &[0.0], &cfg).unwrap();
            let n = match &res.next_state {
                EnvState::Aircraft(a) => a,
                _ => unreachable!(),
            };
            let speed = ((n.x - s.x).powi(2) + (n.y - s.y).powi(2)).sqrt() / cfg.dt;
            let expected = (cfg.ego_speed.powi(2) + cfg.intruder_speed.powi(2)
                - 2.0 * cfg.ego_speed * cfg.intruder_speed * s.psi.cos())
            .sqrt();
            assert!((speed - expected).abs() < 1e-9, "speed {speed} vs {expected}");
            assert!((n.psi - s.psi).abs() < 1e-12, "heading drift without turn input");
        }
    }

    #[test]
    fn reward_is_negative_action_norm() {
        let cfg = EnvConfig::aircraft();
        let s = head_on(&cfg, 2.0);
        assert_eq!(step(&s, &[0.0], &cfg).unwrap().reward, 0.0);
        assert_eq!(step(&s, &[0.7], &cfg).unwrap().reward, -0.7);
        // Out-of-bound commands are clamped before costing.
        assert_eq!(step(&s, &[5.0], &cfg).unwrap().reward, -cfg.action_limit);
    }

    #[test]
    fn angle_wrapping_stays_in_range() {
        for a in [-10.0, -PI, 0.0, PI, 10.0, 100.0] {
            let w = wrap_angle(a);
            assert!(w > -PI - 1e-12 && w <= PI + 1e-12, "wrap({a}) = {w}");
        }
        assert!((wrap_angle(PI + 0.1) - (-PI + 0.1)).abs() < 1e-12);
    }
}
