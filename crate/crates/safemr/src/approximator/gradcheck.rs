//! Finite-difference verification of the reverse-mode gradients.

use super::ApproxFn;
use crate::Result;

/// Outcome of a gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Flat index of the worst weight component (input components follow
    /// the weight components in the numbering).
    pub worst_index: usize,
    pub tol: f64,
    pub passed: bool,
}

const FD_STEP: f64 = 1e-5;
const ABS_FLOOR: f64 = 1e-10;

fn rel_err(analytic: f64, fd: f64) -> f64 {
    let diff = (analytic - fd).abs();
    if diff <= ABS_FLOOR {
        return 0.0;
    }
    diff / analytic.abs().max(fd.abs()).max(1e-8)
}

/// Compares the reverse-mode gradient of `upstream . forward(x)` against
/// central finite differences, componentwise over both the weights and the
/// input. Fails if any relative error exceeds `tol`.
pub fn grad_check(f: &ApproxFn, x: &[f64], upstream: &[f64], tol: f64) -> Result<GradCheckReport> {
    let (_, trace) = f.forward_trace(x)?;
    let analytic = f.backward(&trace, upstream)?;

    let loss = |net: &ApproxFn, input: &[f64]| -> Result<f64> {
        let y = net.forward(input)?;
        Ok(y.iter().zip(upstream).map(|(a, b)| a * b).sum())
    };

    let mut max_rel = 0.0f64;
    let mut worst = 0usize;

    let mut probe = f.clone();
    for i in 0..f.n_params() {
        let orig = f.weights()[i];
        probe.weights_mut()[i] = orig + FD_STEP;
        let up = loss(&probe, x)?;
        probe.weights_mut()[i] = orig - FD_STEP;
        let down = loss(&probe, x)?;
        probe.weights_mut()[i] = orig;
        let fd = (up - down) / (2.0 * FD_STEP);
        let e = rel_err(analytic.weights[i], fd);
        if e > max_rel {
            max_rel = e;
            worst = i;
        }
    }

    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let orig = xp[i];
        xp[i] = orig + FD_STEP;
        let up = loss(f, &xp)?;
        xp[i] = orig - FD_STEP;
        let down = loss(f, &xp)?;
        xp[i] = orig;
        let fd = (up - down) / (2.0 * FD_STEP);
        let e = rel_err(analytic.input[i], fd);
        if e > max_rel {
            max_rel = e;
            worst = f.n_params() + i;
        }
    }

    Ok(GradCheckReport { max_rel_err: max_rel, worst_index: worst, tol, passed: max_rel <= tol })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approximator::{Activation, OutputMap};
    use rand::distributions::{Distribution, Uniform};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_input(dim: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Uniform::new(-1.5, 1.5);
        (0..dim).map(|_| dist.sample(&mut rng)).collect()
    }

    #[test]
    fn named_shapes_pass_at_1e4() {
        let shapes: [&[usize]; 3] = [&[2, 1], &[3, 8, 2], &[4, 16, 16, 1]];
        for (si, dims) in shapes.iter().enumerate() {
            let f = ApproxFn::new(dims, Activation::Tanh, OutputMap::Identity, si as u64).unwrap();
            let x = random_input(dims[0], 100 + si as u64);
            let upstream = random_input(*dims.last().unwrap(), 200 + si as u64);
            let report = grad_check(&f, &x, &upstream, 1e-4).unwrap();
            assert!(
                report.passed,
                "shape {dims:?} failed: max rel err {} at {}",
                report.max_rel_err, report.worst_index
            );
        }
    }

    #[test]
    fn relu_and_heads_pass() {
        for (seed, map) in [(5u64, OutputMap::Nonneg), (6, OutputMap::SquashGaussian)] {
            let f = ApproxFn::new(&[3, 8, 4], Activation::Relu, map, seed).unwrap();
            let x = random_input(3, seed + 50);
            let upstream = random_input(4, seed + 60);
            let report = grad_check(&f, &x, &upstream, 1e-4).unwrap();
            assert!(report.passed, "{map:?} failed: {}", report.max_rel_err);
        }
    }
}
