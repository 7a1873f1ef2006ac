//! Minimal differentiable function approximation.
//!
//! Multilayer perceptrons over flat `f64` parameter vectors with exact
//! reverse-mode gradients, an adaptive-moment optimizer, and a
//! finite-difference gradient checker. This is the numerical substrate for
//! the policy, the two critics and the multiplier network; there is no
//! general computation graph and no GPU path.

mod adam;
mod gradcheck;

pub use adam::{GradStep, StepDirection};
pub use gradcheck::{grad_check, GradCheckReport};

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

use crate::error::SafemrError;
use crate::Result;

/// Clamp range for the log-std half of a squashed-Gaussian head.
pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Hidden-layer activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

/// Transform applied to the final layer.
///
/// `Nonneg` maps every output through a softplus, which structurally
/// guarantees nonnegative outputs (the multiplier head). `SquashGaussian`
/// interprets the final layer as `[mean, log_std]` halves, squashing the
/// mean through tanh and clamping the log-std.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputMap {
    Identity,
    Nonneg,
    SquashGaussian,
}

/// A feed-forward network over one flat parameter vector.
///
/// Parameter layout per layer: the `out x in` weight matrix in row-major
/// order, followed by the `out` biases. The total length is
/// `sum((in + 1) * out)` over layers.
#[derive(Debug, Clone)]
pub struct ApproxFn {
    layer_dims: Vec<usize>,
    weights: Vec<f64>,
    activation: Activation,
    output_map: OutputMap,
}

/// Intermediate activations retained by [`ApproxFn::forward_trace`] for the
/// backward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    /// Post-activation values per layer, starting with the input.
    post: Vec<Vec<f64>>,
    /// Pre-activation values per layer (final entry is the pre-map output).
    pre: Vec<Vec<f64>>,
}

impl Trace {
    /// The final layer's values before the output map, e.g. the raw
    /// `[mean, log_std]` of a squashed-Gaussian head.
    pub fn premap_output(&self) -> &[f64] {
        self.pre.last().expect("trace has at least one layer")
    }
}

/// Gradients produced by the backward pass.
#[derive(Debug, Clone)]
pub struct Gradient {
    /// Gradient w.r.t. the flat parameter vector (same layout as weights).
    pub weights: Vec<f64>,
    /// Gradient w.r.t. the network input.
    pub input: Vec<f64>,
}

fn softplus(z: f64) -> f64 {
    // ln(1 + e^z), stable for large |z|.
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Total parameter count for a given layer-dimension list.
pub fn param_count(layer_dims: &[usize]) -> usize {
    layer_dims.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
}

impl ApproxFn {
    /// Builds a network with fan-in-scaled uniform initialization,
    /// deterministic in `seed`.
    pub fn new(
        layer_dims: &[usize],
        activation: Activation,
        output_map: OutputMap,
        seed: u64,
    ) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.iter().any(|&d| d == 0) {
            return Err(SafemrError::Config(format!(
                "layer dims must list at least input and output sizes, all positive: {layer_dims:?}"
            )));
        }
        if output_map == OutputMap::SquashGaussian && layer_dims.last().unwrap() % 2 != 0 {
            return Err(SafemrError::Config(
                "squash_gaussian head needs an even output dimension (mean + log_std)".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(param_count(layer_dims));
        for w in layer_dims.windows(2) {
            let (n_in, n_out) = (w[0], w[1]);
            let bound = 1.0 / (n_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound);
            for _ in 0..(n_in + 1) * n_out {
                weights.push(dist.sample(&mut rng));
            }
        }
        Ok(Self { layer_dims: layer_dims.to_vec(), weights, activation, output_map })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn output_map(&self) -> OutputMap {
        self.output_map
    }

    pub fn n_params(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn set_weights(&mut self, w: &[f64]) -> Result<()> {
        if w.len() != self.weights.len() {
            return Err(SafemrError::ShapeMismatch { expected: self.weights.len(), got: w.len() });
        }
        self.weights.copy_from_slice(w);
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.layer_dims[0] {
            return Err(SafemrError::ShapeMismatch { expected: self.layer_dims[0], got: x.len() });
        }
        Ok(())
    }

    fn apply_map(&self, z: &[f64]) -> Vec<f64> {
        match self.output_map {
            OutputMap::Identity => z.to_vec(),
            OutputMap::Nonneg => z.iter().map(|&v| softplus(v)).collect(),
            OutputMap::SquashGaussian => {
                let m = z.len() / 2;
                let mut y = Vec::with_capacity(z.len());
                y.extend(z[..m].iter().map(|&v| v.tanh()));
                y.extend(z[m..].iter().map(|&v| v.clamp(LOG_STD_MIN, LOG_STD_MAX)));
                y
            }
        }
    }

    /// Deterministic forward pass; output has the head map applied.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut a = x.to_vec();
        let mut offset = 0;
        let n_layers = self.layer_dims.len() - 1;
        for l in 0..n_layers {
            let (n_in, n_out) = (self.layer_dims[l], self.layer_dims[l + 1]);
            let w = &self.weights[offset..offset + n_in * n_out];
            let b = &self.weights[offset + n_in * n_out..offset + (n_in + 1) * n_out];
            offset += (n_in + 1) * n_out;
            let mut z = vec![0.0; n_out];
            for j in 0..n_out {
                let row = &w[j * n_in..(j + 1) * n_in];
                let mut s = b[j];
                for i in 0..n_in {
                    s += row[i] * a[i];
                }
                z[j] = s;
            }
            a = if l + 1 == n_layers {
                return Ok(self.apply_map(&z));
            } else {
                match self.activation {
                    Activation::Tanh => z.iter().map(|&v| v.tanh()).collect(),
                    Activation::Relu => z.iter().map(|&v| v.max(0.0)).collect(),
                }
            };
        }
        unreachable!("at least one layer");
    }

    /// Forward pass retaining intermediates for [`ApproxFn::backward`].
    pub fn forward_trace(&self, x: &[f64]) -> Result<(Vec<f64>, Trace)> {
        self.check_input(x)?;
        let n_layers = self.layer_dims.len() - 1;
        let mut post = Vec::with_capacity(n_layers + 1);
        let mut pre = Vec::with_capacity(n_layers);
        post.push(x.to_vec());
        let mut offset = 0;
        for l in 0..n_layers {
            let (n_in, n_out) = (self.layer_dims[l], self.layer_dims[l + 1]);
            let w = &self.weights[offset..offset + n_in * n_out];
            let b = &self.weights[offset + n_in * n_out..offset + (n_in + 1) * n_out];
            offset += (n_in + 1) * n_out;
            let a_prev = post.last().unwrap();
            let mut z = vec![0.0; n_out];
            for j in 0..n_out {
                let row = &w[j * n_in..(j + 1) * n_in];
                let mut s = b[j];
                for i in 0..n_in {
                    s += row[i] * a_prev[i];
                }
                z[j] = s;
            }
            if l + 1 < n_layers {
                let a = match self.activation {
                    Activation::Tanh => z.iter().map(|&v| v.tanh()).collect::<Vec<_>>(),
                    Activation::Relu => z.iter().map(|&v| v.max(0.0)).collect(),
                };
                pre.push(z);
                post.push(a);
            } else {
                pre.push(z);
            }
        }
        let out = self.apply_map(pre.last().unwrap());
        Ok((out, Trace { post, pre }))
    }

    /// Reverse-mode gradient of `upstream . output` w.r.t. weights and input,
    /// where `upstream` is given in the mapped output space.
    pub fn backward(&self, trace: &Trace, upstream: &[f64]) -> Result<Gradient> {
        let z_last = trace.premap_output();
        if upstream.len() != z_last.len() {
            return Err(SafemrError::ShapeMismatch { expected: z_last.len(), got: upstream.len() });
        }
        // Pull the upstream back through the output map.
        let dz: Vec<f64> = match self.output_map {
            OutputMap::Identity => upstream.to_vec(),
            OutputMap::Nonneg => z_last
                .iter()
                .zip(upstream)
                .map(|(&z, &u)| u * sigmoid(z))
                .collect(),
            OutputMap::SquashGaussian => {
                let m = z_last.len() / 2;
                let mut d = Vec::with_capacity(z_last.len());
                for i in 0..m {
                    let t = z_last[i].tanh();
                    d.push(upstream[i] * (1.0 - t * t));
                }
                for i in m..z_last.len() {
                    let inside = z_last[i] > LOG_STD_MIN && z_last[i] < LOG_STD_MAX;
                    d.push(if inside { upstream[i] } else { 0.0 });
                }
                d
            }
        };
        self.backward_raw(trace, &dz)
    }

    /// Like [`ApproxFn::backward`], but `upstream_premap` is taken w.r.t. the
    /// final layer's pre-map values (used by the squashed-Gaussian sampler,
    /// which differentiates its own head).
    pub fn backward_raw(&self, trace: &Trace, upstream_premap: &[f64]) -> Result<Gradient> {
        let n_layers = self.layer_dims.len() - 1;
        if upstream_premap.len() != *self.layer_dims.last().unwrap() {
            return Err(SafemrError::ShapeMismatch {
                expected: *self.layer_dims.last().unwrap(),
                got: upstream_premap.len(),
            });
        }
        let mut grad = vec![0.0; self.weights.len()];
        let mut dz = upstream_premap.to_vec();

        // Per-layer weight offsets, for walking backwards.
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for l in 0..n_layers {
            offsets.push(off);
            off += (self.layer_dims[l] + 1) * self.layer_dims[l + 1];
        }

        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.layer_dims[l], self.layer_dims[l + 1]);
            let offset = offsets[l];
            let a_prev = &trace.post[l];
            let (gw, gb) = grad[offset..offset + (n_in + 1) * n_out].split_at_mut(n_in * n_out);
            let w = &self.weights[offset..offset + n_in * n_out];

            let mut dx = vec![0.0; n_in];
            for j in 0..n_out {
                let d = dz[j];
                gb[j] = d;
                let grow = &mut gw[j * n_in..(j + 1) * n_in];
                let wrow = &w[j * n_in..(j + 1) * n_in];
                for i in 0..n_in {
                    grow[i] = d * a_prev[i];
                    dx[i] += d * wrow[i];
                }
            }
            if l > 0 {
                let z_prev = &trace.pre[l - 1];
                dz = match self.activation {
                    Activation::Tanh => {
                        let a = &trace.post[l];
                        dx.iter().zip(a).map(|(&g, &y)| g * (1.0 - y * y)).collect()
                    }
                    Activation::Relu => dx
                        .iter()
                        .zip(z_prev)
                        .map(|(&g, &z)| if z > 0.0 { g } else { 0.0 })
                        .collect(),
                };
            } else {
                dz = dx;
            }
        }
        Ok(Gradient { weights: grad, input: dz })
    }

    /// Writes weights as a flat little-endian f64 array at `<prefix>.bin`
    /// with a JSON sidecar `<prefix>.json` describing the architecture.
    pub fn save(&self, prefix: &Path) -> Result<()> {
        let header = NetHeader {
            layer_dims: self.layer_dims.clone(),
            activation: self.activation,
            output_map: self.output_map,
        };
        let json_path = prefix.with_extension("json");
        let bin_path = prefix.with_extension("bin");
        std::fs::write(&json_path, serde_json::to_vec_pretty(&header)?)?;
        let mut bytes = Vec::with_capacity(self.weights.len() * 8);
        for v in &self.weights {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let mut f = std::fs::File::create(&bin_path)?;
        f.write_all(&bytes)?;
        Ok(())
    }

    /// Inverse of [`ApproxFn::save`]; bit-exact round trip.
    pub fn load(prefix: &Path) -> Result<Self> {
        let header: NetHeader =
            serde_json::from_slice(&std::fs::read(prefix.with_extension("json"))?)?;
        let mut bytes = Vec::new();
        std::fs::File::open(prefix.with_extension("bin"))?.read_to_end(&mut bytes)?;
        let expected = param_count(&header.layer_dims);
        if bytes.len() != expected * 8 {
            return Err(SafemrError::Config(format!(
                "weight file holds {} bytes, architecture needs {}",
                bytes.len(),
                expected * 8
            )));
        }
        let weights = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self {
            layer_dims: header.layer_dims,
            weights,
            activation: header.activation,
            output_map: header.output_map,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct NetHeader {
    layer_dims: Vec<usize>,
    activation: Activation,
    output_map: OutputMap,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_linear_layer_passes_input_through() {
        let mut f = ApproxFn::new(&[2, 2], Activation::Tanh, OutputMap::Identity, 0).unwrap();
        // W = I, b = 0; layout is row-major W then b.
        f.set_weights(&[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(f.forward(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn forward_rejects_wrong_input_dim() {
        let f = ApproxFn::new(&[3, 2], Activation::Tanh, OutputMap::Identity, 0).unwrap();
        assert!(matches!(
            f.forward(&[1.0, 2.0]),
            Err(SafemrError::ShapeMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn nonneg_map_outputs_are_nonnegative() {
        let f = ApproxFn::new(&[3, 16, 4], Activation::Relu, OutputMap::Nonneg, 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dist = Uniform::new(-5.0, 5.0);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..3).map(|_| dist.sample(&mut rng)).collect();
            let y = f.forward(&x).unwrap();
            assert!(y.iter().all(|&v| v >= 0.0), "nonneg head produced {y:?}");
        }
    }

    #[test]
    fn squash_head_outputs_bounded() {
        let f = ApproxFn::new(&[4, 16, 4], Activation::Tanh, OutputMap::SquashGaussian, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let dist = Uniform::new(-10.0, 10.0);
        for _ in 0..500 {
            let x: Vec<f64> = (0..4).map(|_| dist.sample(&mut rng)).collect();
            let y = f.forward(&x).unwrap();
            assert!(y[0] > -1.0 && y[0] < 1.0);
            assert!(y[1] > -1.0 && y[1] < 1.0);
            assert!(y[2] >= LOG_STD_MIN && y[2] <= LOG_STD_MAX);
            assert!(y[3] >= LOG_STD_MIN && y[3] <= LOG_STD_MAX);
        }
    }

    #[test]
    fn squash_head_needs_even_output() {
        assert!(ApproxFn::new(&[4, 3], Activation::Tanh, OutputMap::SquashGaussian, 0).is_err());
    }

    #[test]
    fn fixed_seed_net_matches_straightline_evaluation() {
        // Independent oracle: evaluate the 2-4-1 tanh network by direct
        // scalar arithmetic over the layer equations, reading the same
        // parameter vector but sharing no code with the implementation.
        let f = ApproxFn::new(&[2, 4, 1], Activation::Tanh, OutputMap::Identity, 0).unwrap();
        let x = [0.5, -0.5];
        let w = f.weights();
        let mut hidden = [0.0f64; 4];
        for j in 0..4 {
            let pre = w[j * 2] * x[0] + w[j * 2 + 1] * x[1] + w[8 + j];
            hidden[j] = pre.tanh();
        }
        let mut out = w[12 + 4]; // final bias
        for j in 0..4 {
            out += w[12 + j] * hidden[j];
        }
        let got = f.forward(&x).unwrap();
        assert!((got[0] - out).abs() < 1e-15, "forward {} vs oracle {}", got[0], out);
    }

    #[test]
    fn backward_zero_upstream_is_zero() {
        let f = ApproxFn::new(&[3, 8, 2], Activation::Tanh, OutputMap::Identity, 1).unwrap();
        let (_, trace) = f.forward_trace(&[0.3, -0.2, 1.0]).unwrap();
        let g = f.backward(&trace, &[0.0, 0.0]).unwrap();
        assert!(g.weights.iter().all(|&v| v == 0.0));
        assert!(g.input.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_linear_layer_analytic() {
        // y = W x + b: dL/dW = u x^T, dL/db = u, dL/dx = W^T u.
        let mut f = ApproxFn::new(&[2, 2], Activation::Tanh, OutputMap::Identity, 0).unwrap();
        let w = [0.5, -1.0, 2.0, 0.25];
        f.set_weights(&[w[0], w[1], w[2], w[3], 0.1, -0.1]).unwrap();
        let x = [3.0, -2.0];
        let u = [1.5, -0.5];
        let (_, trace) = f.forward_trace(&x).unwrap();
        let g = f.backward(&trace, &u).unwrap();
        let expect_w = [u[0] * x[0], u[0] * x[1], u[1] * x[0], u[1] * x[1], u[0], u[1]];
        for (a, b) in g.weights.iter().zip(&expect_w) {
            assert!((a - b).abs() < 1e-15);
        }
        let expect_x = [w[0] * u[0] + w[2] * u[1], w[1] * u[0] + w[3] * u[1]];
        for (a, b) in g.input.iter().zip(&expect_x) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn save_load_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let f = ApproxFn::new(&[5, 32, 3], Activation::Relu, OutputMap::Nonneg, 42).unwrap();
        let prefix = dir.path().join("net");
        f.save(&prefix).unwrap();
        let g = ApproxFn::load(&prefix).unwrap();
        assert_eq!(f.layer_dims(), g.layer_dims());
        assert_eq!(f.output_map(), g.output_map());
        assert!(f.weights().iter().zip(g.weights()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let a = ApproxFn::new(&[4, 8, 2], Activation::Tanh, OutputMap::Identity, 9).unwrap();
        let b = ApproxFn::new(&[4, 8, 2], Activation::Tanh, OutputMap::Identity, 9).unwrap();
        let c = ApproxFn::new(&[4, 8, 2], Activation::Tanh, OutputMap::Identity, 10).unwrap();
        assert_eq!(a.weights(), b.weights());
        assert_ne!(a.weights(), c.weights());
    }
}
