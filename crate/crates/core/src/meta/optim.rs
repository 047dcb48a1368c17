//! Parameter update rules for the outer meta-update and region adaptation.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    /// Plain gradient descent.
    Sgd,
    Adam,
}

/// Adam moment estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Stateful optimizer over a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Optimizer {
    Sgd { lr: f64 },
    Adam { lr: f64, state: Adam },
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, n: usize) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd { lr },
            OptimizerKind::Adam => Optimizer::Adam { lr, state: Adam::new(n) },
        }
    }

    pub fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        debug_assert_eq!(theta.len(), grad.len());
        match self {
            Optimizer::Sgd { lr } => {
                for (p, g) in theta.iter_mut().zip(grad) {
                    *p -= *lr * g;
                }
            }
            Optimizer::Adam { lr, state } => {
                state.t += 1;
                let t = state.t as i32;
                let c1 = 1.0 - state.beta1.powi(t);
                let c2 = 1.0 - state.beta2.powi(t);
                for i in 0..theta.len() {
                    let g = grad[i];
                    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
                    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
                    let m_hat = state.m[i] / c1;
                    let v_hat = state.v[i] / c2;
                    theta[i] -= *lr * m_hat / (v_hat.sqrt() + state.eps);
                }
            }
        }
    }
}
