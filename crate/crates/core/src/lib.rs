//! Traffic-signal domain adaptation toolkit: a grid microsimulator, a
//! modular model-based controller, multi-city meta-training and an
//! experiment harness with classical baselines.

pub mod amm;
pub mod baselines;
pub mod error;
pub mod harness;
pub mod meta;
pub mod nn;
pub mod sim;

pub use error::{Error, Result};
