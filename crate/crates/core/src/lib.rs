//! Higher-order intensity interferometry of thermal sources.
//!
//! The crate models far-field intensity measurements of a spatially
//! incoherent thermal source on a one-dimensional pixel array and estimates
//! the source size from measured n-th order intensity correlations:
//!
//! - [`geometry`]: detector bookkeeping and the far-field degree of coherence
//!   of a uniform disc or slit.
//! - [`correlations`]: n- and 2n-point correlations via matrix permanents
//!   and the repeated-reference closed forms.
//! - [`noise`]: moments of Gaussian per-pixel detection efficiency.
//! - [`statistics`]: mean, covariance, Gaussian likelihood, Fisher
//!   information and Cramér–Rao bounds of the measured correlation vector.
//! - [`simulator`]: seeded thermal-light frames with detector noise, and the
//!   sample correlations computed from them.
//! - [`estimation`]: maximum likelihood by Fisher scoring and the Monte
//!   Carlo study harness.
//! - [`scans`]: deterministic bound scans over reference separation, noise
//!   level, and analytic correlation curves.

pub mod correlations;
pub mod error;
pub mod estimation;
pub mod geometry;
pub mod noise;
pub mod rng;
pub mod scans;
pub mod simulator;
pub mod statistics;

pub use error::{Error, Result};
