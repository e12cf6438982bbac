use ndarray::Zip;
use serde::{Deserialize, Serialize};

use crate::model::Params;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Optimizer {
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
    Sgd,
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Scales `grads` so their global L2 norm is at most `max_norm`; returns
/// the norm before clipping.
pub fn clip_global_norm(grads: &mut Params, max_norm: f64) -> f64 {
    let norm = grads.l2_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    kind: Optimizer,
    step: i32,
    m: Params,
    v: Params,
}

impl OptimizerState {
    pub fn new(kind: Optimizer, params: &Params) -> Self {
        Self {
            kind,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    pub fn apply(&mut self, params: &mut Params, grads: &Params, lr: f64) {
        self.step += 1;
        match self.kind {
            Optimizer::Sgd => {
                for (mut p, g) in params.tensors_mut().into_iter().zip(grads.tensors()) {
                    p.scaled_add(-lr, &g);
                }
            }
            Optimizer::Adam { beta1, beta2, epsilon } => {
                let c1 = 1.0 - beta1.powi(self.step);
                let c2 = 1.0 - beta2.powi(self.step);
                let tensors = params
                    .tensors_mut()
                    .into_iter()
                    .zip(grads.tensors())
                    .zip(self.m.tensors_mut())
                    .zip(self.v.tensors_mut());
                for (((p, g), m), v) in tensors {
                    Zip::from(p).and(&g).and(m).and(v).for_each(|p, &g, m, v| {
                        *m = beta1 * *m + (1.0 - beta1) * g;
                        *v = beta2 * *v + (1.0 - beta2) * g * g;
                        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + epsilon);
                    });
                }
            }
        }
    }
}
