//! Reluctant interaction inference after sparse additive modeling.
//!
//! The pipeline fits a sparse additive model with a randomized group lasso,
//! then tests pairwise interactions with p-values and confidence intervals
//! that account for the selection of main effects.

pub mod baselines;
pub mod error;
pub mod group_lasso;
pub mod interaction_model;
pub mod linalg;
pub mod rng;
pub mod selective_mle;
pub mod sim_harness;
pub mod spline_basis;

pub use error::{Error, Result};
