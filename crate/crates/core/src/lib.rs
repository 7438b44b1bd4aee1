//! Demographic-aware QoE data augmentation and a from-scratch suite of MOS
//! regressors, with the evaluation protocol around them.

pub mod classical;
pub mod config;
pub mod data;
pub mod deep;
pub mod demographics;
pub mod error;
pub mod harness;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod preprocess;
pub mod seed;

pub use error::{Error, Result};
pub use matrix::Matrix;
