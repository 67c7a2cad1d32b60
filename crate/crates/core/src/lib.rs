//! Sharpness-aware pretraining lab: a small transformer trained on synthetic
//! corpora, optimisers, learning-rate schedules, robustness probes, curvature
//! estimates, and the harness that ties them into reproducible experiments.

pub mod autodiff;
pub mod cli;
pub mod curvature;
pub mod data;
pub mod error;
pub mod harness;
pub mod model;
pub mod optim;
pub mod persistence;
pub mod probes;
pub mod schedule;

pub use error::{Error, Result};
