//! Zeroth-order optimization by randomized smoothing.
//!
//! The crate targets objectives that are nonsmooth, nonconvex and *not*
//! globally Lipschitz. Instead of a single Lipschitz constant, every
//! objective carries a [`growth::GrowthModel`]: a pointwise bound `alpha(x)`
//! on subgradient norms together with a bound `beta(x, r)` on how much
//! `alpha` can change inside a ball of radius `r`. From the model the crate
//! derives local smoothness and variance constants of the ball-smoothed
//! surrogate `f_delta`, and the optimizers in [`algorithms`] use those
//! constants to pick stepsizes and batch sizes at every iterate.
//!
//! Layout:
//!
//! - [`growth`]: growth models, their calculus and derived constants.
//! - [`smoothing`]: sphere/ball samplers and the two-point gradient estimator.
//! - [`problems`]: benchmark objectives (sensor localization, analytic suite).
//! - [`algorithms`]: RS-GF, RS-NGF, RS-NVRGF and the GF/VRGF baselines.
//! - [`harness`]: config-driven experiment runner behind the `smoothzo` CLI.
//!
//! Batch estimation and seed replication run on rayon when the default
//! `parallel` feature is enabled; results are bit-identical either way.

pub mod algorithms;
pub mod error;
pub mod exec;
pub mod growth;
pub mod harness;
pub mod problems;
pub mod rng;
pub mod smoothing;
pub mod vecops;

pub use error::{Error, Result};
pub use growth::{GrowthModel, SmoothingConfig};
pub use problems::{Problem, Tally};
pub use rng::RngStream;
