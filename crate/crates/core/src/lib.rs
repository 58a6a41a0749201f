//! Flow-aware hydrodynamic neural networks: a coefficient network and a
//! streamfunction network embedded in the rigid-body equations of motion.

pub mod autodiff;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod physics;
pub mod pipeline;
pub mod training;

pub use error::{Error, Result};
