use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tasnet::{TasNetWeights, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates per named parameter.
#[derive(Debug, Clone, Default)]
pub struct AdamState {
    pub step: u64,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Starts a new step; call once before updating the parameters of a step.
    pub fn begin_step(&mut self) {
        self.step += 1;
    }

    /// Bias-corrected update of one parameter slice.
    pub fn update(&mut self, name: &str, param: &mut [f64], grad: &[f64], lr: f64, cfg: &AdamConfig) -> Result<()> {
        if param.len() != grad.len() {
            return Err(Error::invalid(format!("gradient for `{name}` has the wrong length")));
        }
        if self.step == 0 {
            return Err(Error::invalid("begin_step must precede update"));
        }
        let m = self.m.entry(name.to_string()).or_insert_with(|| vec![0.0; param.len()]);
        let v = self.v.entry(name.to_string()).or_insert_with(|| vec![0.0; param.len()]);
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for i in 0..param.len() {
            let g = grad[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            let mhat = m[i] / c1;
            let vhat = v[i] / c2;
            param[i] -= lr * mhat / (vhat.sqrt() + cfg.eps);
        }
        Ok(())
    }
}

/// One Adam step over every weight tensor.
pub fn adam_step(
    weights: &mut TasNetWeights,
    grads: &BTreeMap<String, Tensor>,
    state: &mut AdamState,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    state.begin_step();
    let names: Vec<String> = weights.names().cloned().collect();
    for name in names {
        let g = grads
            .get(&name)
            .ok_or_else(|| Error::invalid(format!("no gradient for `{name}`")))?;
        let w = weights.get_mut(&name).expect("name taken from the weight set");
        state.update(&name, w.data_mut(), g.data(), lr, cfg)?;
    }
    Ok(())
}
