use crate::error::{Error, Result};
use crate::nn::ParamStore;

/// Adam hyperparameters. Defaults are the usual ones: lr 1e-3, betas
/// (0.9, 0.999), epsilon 1e-8.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        AdamState { config, step: 0, first: Vec::new(), second: Vec::new() }
    }

    pub fn first_moment(&self, slot: usize) -> Option<&[f64]> {
        self.first.get(slot).map(Vec::as_slice)
    }

    pub fn second_moment(&self, slot: usize) -> Option<&[f64]> {
        self.second.get(slot).map(Vec::as_slice)
    }

    /// One update of every parameter in `params` using its stored gradient.
    ///
    /// All gradients are checked before anything is modified, so a failed
    /// step leaves both the parameters and the state untouched.
    pub fn step(&mut self, params: &mut ParamStore) -> Result<()> {
        for (name, t) in params.iter() {
            let g = t
                .grad()
                .ok_or_else(|| Error::State(format!("no gradient for parameter '{name}'; run backward first")))?;
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("non-finite gradient for parameter '{name}'")));
            }
        }
        if self.first.is_empty() {
            self.first = params.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
            self.second = self.first.clone();
        }
        if self.first.len() != params.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} parameters, store has {}",
                self.first.len(),
                params.len()
            )));
        }

        self.step += 1;
        let AdamConfig { lr, beta1, beta2, epsilon } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (slot, (_, tensor)) in params.iter_mut().enumerate() {
            let g = tensor.take_grad().expect("checked above");
            let (m, v) = (&mut self.first[slot], &mut self.second[slot]);
            if m.len() != g.len() {
                return Err(Error::Shape(format!("moment buffer size mismatch in slot {slot}")));
            }
            for (i, p) in tensor.data_mut().iter_mut().enumerate() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}
