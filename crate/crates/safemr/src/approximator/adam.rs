//! Adaptive-moment gradient steps used by every learner in the loop.

use serde::{Deserialize, Serialize};

use crate::error::SafemrError;
use crate::Result;

/// Whether a step minimizes or maximizes the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepDirection {
    Descent,
    Ascent,
}

/// Adaptive-moment optimizer state for one parameter vector.
///
/// With fresh moment buffers, a zero gradient leaves the parameters
/// unchanged; NaN or infinite gradients refuse the step without touching
/// either parameters or moments.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradStep {
    pub step_size: f64,
    pub moment_decay_1: f64,
    pub moment_decay_2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl GradStep {
    pub fn new(step_size: f64, n_params: usize) -> Self {
        Self {
            step_size,
            moment_decay_1: 0.9,
            moment_decay_2: 0.999,
            epsilon: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// Moves `params` along the bias-corrected adaptive-moment direction.
    pub fn apply(
        &mut self,
        params: &mut [f64],
        grad: &[f64],
        direction: StepDirection,
    ) -> Result<()> {
        if grad.len() != params.len() || params.len() != self.m.len() {
            return Err(SafemrError::ShapeMismatch { expected: self.m.len(), got: grad.len() });
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(SafemrError::NumericFault(
                "gradient contains NaN or Inf; step refused".into(),
            ));
        }
        self.t += 1;
        let b1 = self.moment_decay_1;
        let b2 = self.moment_decay_2;
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        let sign = match direction {
            StepDirection::Descent => -1.0,
            StepDirection::Ascent => 1.0,
        };
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] += sign * self.step_size * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}
