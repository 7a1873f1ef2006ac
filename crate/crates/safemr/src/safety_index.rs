//! The parametric energy-function certificate and its calculus.
//!
//! The certificate assigns a scalar energy to a state through its distance
//! features: `phi = (sigma + d_min)^n - d^n - k * d_dot`. States with
//! positive energy are treated as unsafe; a safe controller must keep the
//! energy nonpositive and dissipate it when it is positive. Everything in
//! this module is a pure function of `(sigma, k, n)` and the distance
//! features, including the analytic gradients used by the synthesis loop.

use serde::{Deserialize, Serialize};

use crate::error::SafemrError;
use crate::Result;

/// Distances below this are clamped before powers and logarithms; the
/// gradient in `n` diverges as d -> 0 (contact).
pub const D_FLOOR: f64 = 1e-3;

/// Default slack on the required one-step energy descent.
pub const DEFAULT_ETA_D: f64 = 0.05;

/// Tunable certificate parameters `(sigma, k, n)` plus the fixed minimum
/// safe distance and descent slack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyIndexParams {
    /// Distance margin added on top of `d_min`.
    pub sigma: f64,
    /// Weight on the approach speed `d_dot`.
    pub k: f64,
    /// Distance exponent.
    pub n: f64,
    /// Minimum safe distance (length units).
    pub d_min: f64,
    /// Required energy descent per step when energy is positive.
    pub eta_d: f64,
}

impl SafetyIndexParams {
    /// Validates `sigma >= 0`, `k >= 0`, `n >= 1`, `d_min > 0`, `eta_d > 0`.
    ///
    /// Zero `sigma`/`k` are admitted so fixed baseline certificates such as
    /// `d_min - d` (sigma = 0, k = 0, n = 1) are representable; learned
    /// parameters are kept strictly positive by the projection box.
    pub fn new(sigma: f64, k: f64, n: f64, d_min: f64, eta_d: f64) -> Result<Self> {
        if !(sigma >= 0.0) || !(k >= 0.0) || !(n >= 1.0) {
            return Err(SafemrError::Config(format!(
                "safety index parameters out of range: sigma={sigma}, k={k}, n={n} \
                 (need sigma >= 0, k >= 0, n >= 1)"
            )));
        }
        if !(d_min > 0.0) || !(eta_d > 0.0) {
            return Err(SafemrError::Config(format!(
                "d_min and eta_d must be positive: d_min={d_min}, eta_d={eta_d}"
            )));
        }
        Ok(Self { sigma, k, n, d_min, eta_d })
    }

    /// The base certificate `phi_0 = d_min - d`, i.e. sigma = 0, k = 0, n = 1.
    pub fn phi0(d_min: f64, eta_d: f64) -> Result<Self> {
        Self::new(0.0, 0.0, 1.0, d_min, eta_d)
    }

    /// Certificate parameters as a `(sigma, k, n)` triple.
    pub fn zeta(&self) -> [f64; 3] {
        [self.sigma, self.k, self.n]
    }

    /// Replaces the tunable triple, keeping `d_min` and `eta_d`.
    pub fn with_zeta(&self, zeta: [f64; 3]) -> Result<Self> {
        Self::new(zeta[0], zeta[1], zeta[2], self.d_min, self.eta_d)
    }
}

/// Distance to the nearest obstacle and its time derivative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceFeature {
    pub d: f64,
    pub d_dot: f64,
}

impl DistanceFeature {
    /// Clamps the distance to [`D_FLOOR`] at construction.
    pub fn new(d: f64, d_dot: f64) -> Self {
        Self { d: d.max(D_FLOOR), d_dot }
    }
}

/// Weights of the magnitude-regularization term `a * (sigma + d_min)^n + b * k`.
///
/// `(a, b) = (0, 0)` reduces the method exactly to the unregularized
/// joint-synthesis baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MagRegWeights {
    pub a: f64,
    pub b: f64,
}

impl MagRegWeights {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a >= 0.0) || !(b >= 0.0) {
            return Err(SafemrError::Config(format!(
                "magnitude regularization weights must be nonnegative: a={a}, b={b}"
            )));
        }
        Ok(Self { a, b })
    }

    pub const ZERO: MagRegWeights = MagRegWeights { a: 0.0, b: 0.0 };
}

/// Energy `phi = (sigma + d_min)^n - d^n - k * d_dot`.
pub fn phi(p: &SafetyIndexParams, f: &DistanceFeature) -> f64 {
    let base = p.sigma + p.d_min;
    base.powf(p.n) - f.d.powf(p.n) - p.k * f.d_dot
}

/// One-step descent residual `phi(next) - max(phi(now) - eta_d, 0)`.
///
/// Negative iff the energy-descent constraint is satisfied for this step.
pub fn residual(p: &SafetyIndexParams, f_now: &DistanceFeature, f_next: &DistanceFeature) -> f64 {
    phi(p, f_next) - (phi(p, f_now) - p.eta_d).max(0.0)
}

/// Magnitude-regularization value `a * (sigma + d_min)^n + b * k`.
pub fn mag_reg(p: &SafetyIndexParams, w: &MagRegWeights) -> f64 {
    let base = p.sigma + p.d_min;
    w.a * base.powf(p.n) + w.b * p.k
}

/// Analytic gradient of [`phi`] in `(sigma, k, n)`:
/// `[n (sigma+d_min)^(n-1), -d_dot, (sigma+d_min)^n ln(sigma+d_min) - d^n ln d]`.
pub fn phi_grad(p: &SafetyIndexParams, f: &DistanceFeature) -> [f64; 3] {
    let base = p.sigma + p.d_min;
    let d = f.d.max(D_FLOOR);
    [
        p.n * base.powf(p.n - 1.0),
        -f.d_dot,
        base.powf(p.n) * base.ln() - d.powf(p.n) * d.ln(),
    ]
}

/// Analytic gradient of [`mag_reg`] in `(sigma, k, n)`.
pub fn mag_reg_grad(p: &SafetyIndexParams, w: &MagRegWeights) -> [f64; 3] {
    let base = p.sigma + p.d_min;
    [
        w.a * p.n * base.powf(p.n - 1.0),
        w.b,
        w.a * base.powf(p.n) * base.ln(),
    ]
}

/// Gradient of [`residual`] in `(sigma, k, n)`.
///
/// The max kink uses the subgradient convention that the zero branch wins
/// at the tie: the `phi(now)` term contributes only when
/// `phi(now) - eta_d > 0` strictly.
pub fn residual_grad(
    p: &SafetyIndexParams,
    f_now: &DistanceFeature,
    f_next: &DistanceFeature,
) -> [f64; 3] {
    let g_next = phi_grad(p, f_next);
    if phi(p, f_now) - p.eta_d > 0.0 {
        let g_now = phi_grad(p, f_now);
        [g_next[0] - g_now[0], g_next[1] - g_now[1], g_next[2] - g_now[2]]
    } else {
        g_next
    }
}
