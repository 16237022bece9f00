use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{EhdError, Result};

/// Adam with linear learning-rate warmup followed by a constant rate.
#[derive(Clone, Debug)]
pub struct Adam {
    pub base_lr: f64,
    pub warmup: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(base_lr: f64, warmup: u64) -> Self {
        Adam {
            base_lr,
            warmup,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Number of completed updates.
    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Learning rate used for 1-based update number `step`.
    pub fn lr_at(&self, step: u64) -> f64 {
        if self.warmup == 0 || step >= self.warmup {
            self.base_lr
        } else {
            self.base_lr * step as f64 / self.warmup as f64
        }
    }

    /// Applies one update. Non-finite gradients abort the step and leave the
    /// parameters and moment estimates untouched.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Option<Tensor>]) -> Result<()> {
        if grads.len() != store.len() {
            return Err(EhdError::shape(
                "adam",
                format!("{} gradients for {} parameters", grads.len(), store.len()),
            ));
        }
        let next = self.step + 1;
        if grads.iter().flatten().any(|g| !g.is_finite()) {
            log::warn!("non-finite gradient at optimizer step {next}; update skipped");
            return Err(EhdError::NonFiniteGradient { step: next });
        }
        if self.m.len() != store.len() {
            self.m = store.iter().map(|p| vec![0.0; p.value.len()]).collect();
            self.v = self.m.clone();
        }
        self.step = next;
        let lr = self.lr_at(next);
        let bc1 = 1.0 - self.beta1.powi(next.min(i32::MAX as u64) as i32);
        let bc2 = 1.0 - self.beta2.powi(next.min(i32::MAX as u64) as i32);
        for i in store.trainable_indices() {
            let Some(g) = &grads[i] else { continue };
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let w = store.value_mut(i).data_mut();
            for j in 0..w.len() {
                let gj = g.data()[j];
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * gj;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * gj * gj;
                let mh = m[j] / bc1;
                let vh = v[j] / bc2;
                w[j] -= lr * mh / (vh.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
