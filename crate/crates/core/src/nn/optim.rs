//! Parameter updates.

use serde::{Deserialize, Serialize};

use super::net::ParamVector;
use crate::error::{Error, Result};

/// `params - lr * grad` as a new vector.
pub fn sgd_step(params: &ParamVector, grad: &ParamVector, lr: f64) -> Result<ParamVector> {
    if params.len() != grad.len() {
        return Err(Error::shape(format!(
            "parameter length {} does not match gradient length {}",
            params.len(),
            grad.len()
        )));
    }
    if !(lr >= 0.0) {
        return Err(Error::config("lr", "learning rate must be nonnegative"));
    }
    Ok(ParamVector(
        params.0.iter().zip(&grad.0).map(|(p, g)| p - lr * g).collect(),
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> AdamConfig {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam optimiser state for one parameter vector.
#[derive(Clone, Debug)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(cfg: AdamConfig, len: usize) -> Adam {
        Adam {
            cfg,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    /// Returns the updated parameters.
    pub fn step(&mut self, params: &ParamVector, grad: &ParamVector) -> Result<ParamVector> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::shape("Adam state, parameters and gradient lengths differ"));
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        let mut out = params.clone();
        for i in 0..out.len() {
            let g = grad.0[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            out.0[i] -= lr * mhat / (vhat.sqrt() + eps);
        }
        Ok(out)
    }
}
