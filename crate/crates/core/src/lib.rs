//! Individualized group learning.
//!
//! For a target individual, information is pooled from similar individuals
//! through kernel similarity weights built on exogenous covariates, on noisy
//! individual estimates, or on both. Pooled estimates come from weighted
//! averages of estimators or weighted sums of convex objectives, with
//! bandwidths chosen by leave-one-out cross-validation.

pub mod error;
pub mod kernels;
pub mod stats;
pub mod rng;
pub mod distances;
pub mod population;
pub mod weights;
pub mod aggregation;
pub mod bandwidth;
pub mod simulation;
pub mod applications;
pub mod cli;

pub use error::{Error, Result};
pub use kernels::{Bandwidth, Kernel};
pub use population::{IndividualRecord, Population};
