//! Simulation and verification toolkit for the dynamic asymmetric simple
//! exclusion process, its microscopic Hopf-Cole transform, discrete heat
//! kernels and limiting space-time Ornstein-Uhlenbeck fields.

pub mod config;
pub mod error;
pub mod experiment;
pub mod heat_kernel;
pub mod hopf_cole;
pub mod lattice;
pub mod model;
pub mod output;
pub mod rng;
pub mod sim;
pub mod spde;
pub mod stationary;
pub mod stats;

pub use error::{ConfigError, Error, Result};
