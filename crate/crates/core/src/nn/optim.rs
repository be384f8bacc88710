//! First-order optimizers over groups of flat parameter slices.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam { beta1: f64, beta2: f64, eps: f64 },
    Sgd { momentum: f64 },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Optimizer state: one moment buffer (two for Adam) per parameter group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub steps: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind) -> Self {
        Self {
            kind,
            steps: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    fn ensure_state(&mut self, params: &[&mut [f64]]) -> Result<()> {
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![0.0; p.len()]).collect();
            if matches!(self.kind, OptimizerKind::Adam { .. }) {
                self.second = self.first.clone();
            }
        }
        if self.first.len() != params.len()
            || self.first.iter().zip(params).any(|(s, p)| s.len() != p.len())
        {
            return Err(invalid("optimizer state does not match the parameter layout"));
        }
        Ok(())
    }

    /// Updates every group in place with its own learning rate. Groups whose
    /// learning rate is exactly zero are left untouched.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], lrs: &[f64]) -> Result<()> {
        if params.len() != grads.len() || params.len() != lrs.len() {
            return Err(invalid("parameter, gradient and learning-rate groups differ in count"));
        }
        if params.iter().zip(grads).any(|(p, g)| p.len() != g.len()) {
            return Err(invalid("gradient shape does not match parameter shape"));
        }
        self.ensure_state(params)?;
        self.steps += 1;
        match self.kind {
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let bc1 = 1.0 - beta1.powi(self.steps as i32);
                let bc2 = 1.0 - beta2.powi(self.steps as i32);
                for (gi, (p, g)) in params.iter_mut().zip(grads).enumerate() {
                    let lr = lrs[gi];
                    let m = &mut self.first[gi];
                    let v = &mut self.second[gi];
                    for j in 0..p.len() {
                        m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                        v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                        if lr != 0.0 {
                            let m_hat = m[j] / bc1;
                            let v_hat = v[j] / bc2;
                            p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
                        }
                    }
                }
            }
            OptimizerKind::Sgd { momentum } => {
                for (gi, (p, g)) in params.iter_mut().zip(grads).enumerate() {
                    let lr = lrs[gi];
                    let buf = &mut self.first[gi];
                    for j in 0..p.len() {
                        buf[j] = momentum * buf[j] + g[j];
                        if lr != 0.0 {
                            p[j] -= lr * buf[j];
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
