use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use super::{Param, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
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

/// Bias-corrected Adam. Moments are created on the first step and matched
/// to parameters by position.
#[derive(Debug, Clone)]
pub struct Adam<S> {
    pub config: AdamConfig,
    pub timestep: u64,
    m: Vec<ArrayD<S>>,
    v: Vec<ArrayD<S>>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            timestep: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Updates every trainable parameter from its accumulated gradient.
    pub fn step(&mut self, params: Vec<&mut Param<S>>) {
        let params: Vec<&mut Param<S>> = params.into_iter().filter(|p| p.trainable).collect();
        if self.m.is_empty() {
            self.m = params.iter().map(|p| ArrayD::zeros(p.value.raw_dim())).collect();
            self.v = self.m.clone();
        }
        assert_eq!(self.m.len(), params.len(), "parameter set changed between steps");
        self.timestep += 1;
        let c = self.config;
        let t = self.timestep as i32;
        let (b1, b2) = (S::of(c.beta1), S::of(c.beta2));
        let bc1 = S::of(1.0 - c.beta1.powi(t));
        let bc2 = S::of(1.0 - c.beta2.powi(t));
        let (lr, eps) = (S::of(c.learning_rate), S::of(c.epsilon));
        for ((p, m), v) in params.into_iter().zip(&mut self.m).zip(&mut self.v) {
            let value = p.value.as_slice_mut().expect("contiguous parameter");
            let grad = p.grad.as_slice().expect("contiguous gradient");
            let m = m.as_slice_mut().expect("contiguous moment");
            let v = v.as_slice_mut().expect("contiguous moment");
            for i in 0..value.len() {
                let g = grad[i];
                m[i] = b1 * m[i] + (S::one() - b1) * g;
                v[i] = b2 * v[i] + (S::one() - b2) * g * g;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                value[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::IxDyn;

    fn scalar(v: f64, g: f64) -> Param<f64> {
        let mut p = Param::new("w", ArrayD::from_elem(IxDyn(&[1]), v));
        p.grad.fill(g);
        p
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = scalar(0.7, 0.0);
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(vec![&mut p]);
        assert_eq!(p.value[[0]], 0.7);
        assert_eq!(adam.timestep, 1);
    }

    #[test]
    fn first_step_is_minus_lr() {
        let mut p = scalar(0.0, 1.0);
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(vec![&mut p]);
        let expected = -1e-3 * 1.0 / (1.0 + 1e-8);
        assert!((p.value[[0]] - expected).abs() < 1e-15);
    }

    #[test]
    fn two_steps_match_reference() {
        let grads = [0.5, -2.0];
        let mut p = scalar(1.0, 0.0);
        let mut adam = Adam::new(AdamConfig::default());
        let (mut m, mut v, mut w) = (0.0f64, 0.0f64, 1.0f64);
        for (t, g) in grads.iter().enumerate() {
            p.grad.fill(*g);
            adam.step(vec![&mut p]);
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t as i32 + 1));
            let vh = v / (1.0 - 0.999f64.powi(t as i32 + 1));
            w -= 1e-3 * mh / (vh.sqrt() + 1e-8);
            assert!((p.value[[0]] - w).abs() < 1e-15);
        }
    }

    #[test]
    fn buffers_are_skipped() {
        let mut b = Param::buffer("running", ArrayD::from_elem(IxDyn(&[1]), 2.0));
        b.grad.fill(1.0);
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(vec![&mut b]);
        assert_eq!(b.value[[0]], 2.0);
    }
}
