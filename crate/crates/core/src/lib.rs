//! Continued fraction regression.
//!
//! Models are analytic continued fractions
//! `g0(x) + h0(x) / (g1(x) + h1(x) / (g2(x) + ...))` whose partial numerators
//! and denominators are affine in the input features. A memetic algorithm over
//! a 13-agent ternary tree selects which variables each model uses, while a
//! Nelder-Mead direct search tunes the coefficients.
//!
//! Module map:
//! - [`model`]: the continued fraction representation, evaluation, truncation, text I/O.
//! - [`data`]: datasets, train/test splits, and the MSE family of metrics.
//! - [`nelder_mead`]: simplex minimiser and the per-model local search.
//! - [`memetic`]: population, recombination, mutation and the full training loop.
//! - [`reference`]: closed-form oracles (Gamma, Euler's identity, sin/tanh fractions).
//! - [`report`]: result rows, medians and performance profiles.
//! - [`commands`]: the command implementations behind the `cfr` binary.

pub mod commands;
pub mod data;
mod error;
pub mod memetic;
pub mod model;
pub mod nelder_mead;
pub mod reference;
pub mod report;

pub use data::{adjusted_mse, mse, nmse, Dataset, Metrics};
pub use error::{CfrError, Result};
pub use memetic::{MaConfig, RunResult};
pub use model::{ContinuedFraction, EvalOutcome, LinearTerm};
pub use nelder_mead::NmConfig;
