use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::nn::{Parameter, Real};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

/// Adam (beta1 0.9, beta2 0.999, eps 1e-8) or plain SGD. Moments are kept
/// in 64-bit regardless of the parameter type.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Optimizer { kind, lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// Applies one update. `grads[i]` belongs to `params[i]`; `None` leaves
    /// the parameter and its moments untouched. Every gradient is checked
    /// before anything is modified.
    pub fn step<T: Real>(&mut self, params: &mut [Parameter<T>], grads: &[Option<Vec<T>>]) -> Result<(), TrainError> {
        if grads.len() != params.len() {
            return Err(TrainError::Config(format!("{} gradients for {} parameters", grads.len(), params.len())));
        }
        for (p, g) in params.iter().zip(grads) {
            if let Some(g) = g {
                if g.len() != p.value.len() {
                    return Err(TrainError::Config(format!("gradient of {} has the wrong length", p.name)));
                }
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(TrainError::NonFiniteGradient { param: p.name.clone() });
                }
            }
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.value.len()]).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let lr = self.lr;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    if let (true, Some(g)) = (p.trainable, g) {
                        for (w, &gi) in p.value.data_mut().iter_mut().zip(g) {
                            *w = T::lit(w.as_f64() - lr * gi.as_f64());
                        }
                    }
                }
            }
            OptimizerKind::Adam => {
                let (b1, b2) = (self.beta1, self.beta2);
                let c1 = 1.0 - b1.powi(self.t as i32);
                let c2 = 1.0 - b2.powi(self.t as i32);
                for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
                    let (true, Some(g)) = (p.trainable, g) else { continue };
                    let (m, v) = (&mut self.m[k], &mut self.v[k]);
                    for (j, w) in p.value.data_mut().iter_mut().enumerate() {
                        let gi = g[j].as_f64();
                        m[j] = b1 * m[j] + (1.0 - b1) * gi;
                        v[j] = b2 * v[j] + (1.0 - b2) * gi * gi;
                        let step = lr * (m[j] / c1) / ((v[j] / c2).sqrt() + self.eps);
                        *w = T::lit(w.as_f64() - step);
                    }
                }
            }
        }
        Ok(())
    }
}
