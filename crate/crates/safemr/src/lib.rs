//! Joint synthesis of safe control policies and energy-function safety
//! certificates, with a magnitude-regularization term that trades away
//! certificate conservativeness while preserving feasibility.
//!
//! The crate is organized around the training pipeline:
//!
//! - [`approximator`]: minimal MLP substrate (forward/backward, Adam,
//!   gradient checking) for the policy, critics and multiplier network.
//! - [`safety_index`]: the parametric energy function, its one-step
//!   descent residual, the magnitude-regularization term, and analytic
//!   gradients of all three.
//! - [`envs`]: deterministic aircraft-avoidance and particle goal/push
//!   environments exposing distance features for the certificate.
//! - [`agent`]: replay buffer, constrained actor-critic updates, and the
//!   state-dependent Lagrange multiplier.
//! - [`synthesis`]: the multi-timescale outer loop that interleaves
//!   critic, policy, multiplier and certificate-parameter updates.
//! - [`oracle`]: grid-based backward reachability (ground-truth unsafe
//!   sets) and a brute-force feasibility verifier.
//! - [`eval`]: rollout evaluation, seed aggregation and report tables.
//! - [`config`] / [`harness`]: experiment configuration and the training
//!   orchestration used by the CLI.

pub mod agent;
pub mod approximator;
pub mod config;
pub mod envs;
pub mod error;
pub mod eval;
pub mod harness;
pub mod oracle;
pub mod safety_index;
pub mod synthesis;

pub use error::SafemrError;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, SafemrError>;
