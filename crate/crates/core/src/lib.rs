//! Unsupervised deep-learning pilot power allocation for multi-user
//! distributed massive MIMO.
//!
//! The crate generates large-scale fading data for a hexagonal cell served by
//! distributed remote antenna units, evaluates the sum MSE of MMSE channel
//! estimation for arbitrary superposed-pilot power allocations, provides the
//! APPA / RPA / ESPA baselines, and trains a fully connected network whose
//! loss is the sum MSE itself.

pub mod allocators;
pub mod channel;
pub mod cli;
pub mod config;
pub mod error;
pub mod gradcheck;
pub mod msecore;
pub mod neuralnet;
pub mod rng;
pub mod trainer;

pub use config::SystemConfig;
pub use error::{Error, Result};
