//! Risk-sensitive policy-gradient engine.

pub mod algorithms;
pub mod critics;
pub mod envs;
pub mod estimator;
pub mod error;
pub mod normal;
pub mod numeric;
pub mod oracle;
pub mod policy;
pub mod risk;
pub mod rng;

pub use error::{Error, Result};
