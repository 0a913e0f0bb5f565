//! Calibrated, constraint-aware, counterfactually evaluated multi-objective
//! ad ranking on a synthetic logging simulator with known ground truth.

pub mod calibration;
pub mod cli;
pub mod constraints;
pub mod counterfactual;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod report;
pub mod rng;
pub mod simulator;

pub use error::{Error, Result};
pub mod trainer;
