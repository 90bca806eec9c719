use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::params::{Grads, ParamSet};

/// Adam with optional global-norm gradient clipping.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip_norm: Option<f64>,
    step: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl Adam {
    pub fn new(params: &ParamSet, lr: f64) -> Self {
        let zeros = params.zero_grads().0;
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: None,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn with_clip(mut self, norm: f64) -> Self {
        self.clip_norm = Some(norm);
        self
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &Grads) {
        self.step += 1;
        let mut scale = 1.0;
        if let Some(max) = self.clip_norm {
            let n = grads.global_norm();
            if n > max {
                scale = max / n;
            }
        }
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for ((p, g), (m, v)) in params
            .values
            .iter_mut()
            .zip(&grads.0)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for i in 0..p.data.len() {
                let gi = g.data[i] * scale;
                m.data[i] = self.beta1 * m.data[i] + (1.0 - self.beta1) * gi;
                v.data[i] = self.beta2 * v.data[i] + (1.0 - self.beta2) * gi * gi;
                let mh = m.data[i] / bc1;
                let vh = v.data[i] / bc2;
                p.data[i] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}
