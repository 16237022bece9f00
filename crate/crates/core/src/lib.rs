//! Explainable history distillation for marked temporal point processes.
pub mod autodiff;
pub mod baselines;
pub mod config;
pub mod data;
pub mod distiller;
pub mod error;
pub mod eval;
pub mod event;
pub mod mtpp;
pub mod parallel;
pub mod rng;

pub use error::{EhdError, Result};
