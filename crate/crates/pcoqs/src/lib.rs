//! Differentially private conformal prediction via noisy binary-search
//! quantiles.
//!
//! Split conformal prediction needs one statistic from its calibration set:
//! the (1-α)-level quantile of the non-conformity scores. Publishing that
//! quantile (or prediction sets built from it) leaks information about the
//! calibration points, so this crate releases it through a differentially
//! private mechanism instead:
//!
//! * [`quantile::pcoqs_quantile`] — a binary search over the score interval
//!   driven by Gaussian-noised range counts. The noise level is calibrated to
//!   the fixed iteration count, so the whole search satisfies ρ-zCDP.
//! * [`quantile::exponq_quantile`] — a baseline that discretizes the interval
//!   into bins and picks an edge through the exponential mechanism with an
//!   inflated target rank, with grid-search tuning of its hyperparameters.
//!
//! [`bounds`] evaluates the closed-form rank-error and coverage guarantees of
//! the noisy search, [`conformal`] builds hinge-loss scores, prediction sets
//! and quality metrics, [`models`] and [`datagen`] provide the desk-scale
//! classifiers and synthetic data the benchmarks run on, and [`harness`]
//! replicates full experiments under seeded, splittable random streams and
//! emits result tables.

pub mod bounds;
pub mod conformal;
pub mod data;
pub mod datagen;
pub mod error;
pub mod harness;
pub mod models;
pub mod privacy;
pub mod quantile;
pub mod rng;
pub mod score;

pub use error::{Error, Result};
pub use privacy::{NoiseSpec, PrivacyBudget};
pub use quantile::{Mechanism, QuantileResult};
pub use score::ScoreSet;
