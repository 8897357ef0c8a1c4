//! Temporal Talbot revivals of a trapped matter wave in a tilted 1D lattice.
//!
//! The crate models a tight-binding chain in a harmonic or gaussian trap under
//! a constant force, evolves it either analytically (frozen populations) or by
//! integrating the discrete nonlinear equation, and extracts the momentum-space
//! observables used to locate the revival time.

pub mod analytic;
pub mod cli;
pub mod config;
pub mod dnle;
pub mod error;
pub mod experiments;
pub mod fit;
pub mod model;
pub mod observables;
pub mod output;

pub use error::{Error, Result};
pub use model::ExperimentConfig;
