use serde::{Deserialize, Serialize};

use super::{HasParams, Real};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub step: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.config.learning_rate = lr;
    }

    pub fn update<N: HasParams<T> + ?Sized>(&mut self, net: &mut N) {
        let params = net.params_mut();
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![T::zero(); p.value.len()]).collect();
            self.second = self.first.clone();
        }
        assert_eq!(self.first.len(), params.len(), "parameter layout changed");
        self.step += 1;
        let c = &self.config;
        let b1 = T::from_f64c(c.beta1);
        let b2 = T::from_f64c(c.beta2);
        let one = T::one();
        let correct1 = one - b1.powi(self.step as i32);
        let correct2 = one - b2.powi(self.step as i32);
        let lr = T::from_f64c(c.learning_rate);
        let eps = T::from_f64c(c.epsilon);
        for ((p, m), v) in params.into_iter().zip(&mut self.first).zip(&mut self.second) {
            for i in 0..p.value.len() {
                let g = p.grad[i];
                m[i] = b1 * m[i] + (one - b1) * g;
                v[i] = b2 * v[i] + (one - b2) * g * g;
                let m_hat = m[i] / correct1;
                let v_hat = v[i] / correct2;
                p.value[i] = p.value[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }

    pub fn second_moments(&self) -> impl Iterator<Item = &T> {
        self.second.iter().flatten()
    }
}
