//! Minimal dense-network engine with reverse-mode gradients.

mod check;
mod net;
mod optim;

pub use check::{grad_check, GradCheckReport};
pub use net::{param_count, squared_error, Activation, Net, NetFragment, ParamVector};
pub use optim::{sgd_step, Adam, AdamConfig};
