//! Outcome statistics of repeated measurements on an Unruh-DeWitt detector.
//!
//! A two-level detector couples to a massless scalar field through a train of
//! switching windows. After every window the detector is measured and reset.
//! Because the field keeps the memory of earlier interactions, the probability
//! of a click depends on the record of earlier clicks. This crate computes
//! those probabilities, bounds them, and decides whether the difference from
//! independent Born-rule statistics is detectable.
//!
//! Modules:
//!
//! - [`combinatorics`]: Wick contraction classes, restricted partitions, term counts.
//! - [`kernel`]: worldlines and regularized Wightman functions.
//! - [`schedule`]: switching profiles and the repetition grid.
//! - [`response`]: excitation probabilities, irreducible integrals, conditional probabilities.
//! - [`bounds`]: tight and loose bounds and the validity horizon.
//! - [`strings`]: bit strings and Born versus repeated-measurement string laws.
//! - [`bayes`]: sequential Bayesian discrimination between the two laws.
//! - [`oracle`]: exact finite-dimensional simulation of the measurement protocol.

#![forbid(unsafe_code)]
// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bayes;
pub mod bounds;
pub mod combinatorics;
pub mod error;
pub mod kernel;
pub mod oracle;
pub mod quadrature;
pub mod response;
pub mod schedule;
pub mod special;
pub mod strings;

pub use error::{Error, Result};
