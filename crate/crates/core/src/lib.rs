//! Numerical companion for continuous-action behavioral cloning bounds.
//!
//! The crate is organised bottom-up:
//!
//! - [`metrics`]: TV and Wasserstein-1 on grid densities, empirical samples
//!   and point masses, grid Lipschitz/Hölder semi-norms, log-log fits.
//! - [`mdp`]: the two analytically tractable Lipschitz MDPs (clip chain and
//!   shift control), policies and seeded rollouts.
//! - [`value`]: closed-form value series, Monte-Carlo evaluation, a tabular
//!   oracle and the performance-difference identity.
//! - [`bounds`]: every constant and gap bound with explicit applicability.
//! - [`noise`]: noise kernels, TV-Lipschitz certification, injection and
//!   convolution smoothing.
//! - [`bc`]: demonstration collection, least-squares imitators and gap
//!   measurement.
//! - [`experiments`]: named scenarios behind the [`experiments::Scenario`]
//!   trait, looked up by name in a [`experiments::ScenarioRegistry`].

// `!(x > 0.0)` style guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bc;
pub mod bounds;
pub mod config;
pub mod error;
pub mod experiments;
pub mod mdp;
pub mod metrics;
pub mod noise;
pub mod output;
pub mod stats;
pub mod stream;
pub mod svg;
pub mod value;

pub use error::{Error, Result};
