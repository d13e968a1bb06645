//! Doubly robust evaluation and worst-case training of predictive models
//! under distribution shift with partially observed covariates.
//!
//! The pipeline: split folds, fit nuisances (outcome model + density ratio)
//! on the held-out fold, estimate losses and bound ingredients on the main
//! fold, turn them into worst-case generalization bounds parameterized by
//! sensitivity values, and optionally minimize the worst-case objective
//! over a linear model class.

pub mod dataset;
pub mod error;
pub mod estimators;
pub mod glm;
pub mod nuisance;
pub mod synth;
pub mod util;

pub use error::{Error, Result};
