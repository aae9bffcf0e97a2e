use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Scalar;

/// Adam hyper-parameters. Defaults: lr 3e-4, β₁ 0.9, β₂ 0.999, ε 1e-8.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 3e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig { lr, ..Self::default() }
    }
}

/// Adam with bias-corrected moment estimates over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    step: u64,
    m: Vec<T>,
    v: Vec<T>,
    pub config: AdamConfig,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(num_params: usize, config: AdamConfig) -> Self {
        AdamState { step: 0, m: vec![T::zero(); num_params], v: vec![T::zero(); num_params], config }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [T], grads: &[T]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Config(format!(
                "adam state holds {} parameters, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let bc1 = T::lit(1.0 - beta1.powi(t));
        let bc2 = T::lit(1.0 - beta2.powi(t));
        let (b1, b2, lr, eps) = (T::lit(beta1), T::lit(beta2), T::lit(lr), T::lit(eps));
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
        for ((p, &g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = b1 * *m + one_b1 * g;
            *v = b2 * *v + one_b2 * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = AdamConfig::default();
        assert_eq!((c.lr, c.beta1, c.beta2), (3e-4, 0.9, 0.999));
        let parsed: AdamConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(parsed, c);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut st = AdamState::<f64>::new(3, AdamConfig::default());
        let mut p = vec![1.0, -2.0, 0.5];
        for _ in 0..25 {
            st.step(&mut p, &[0.0; 3]).unwrap();
        }
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
        assert_eq!(st.steps_taken(), 25);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m̂ = g, v̂ = g², so Δ = lr · g / (|g| + ε) = 0.1 / (1 + 1e-8).
        let mut st = AdamState::<f64>::new(1, AdamConfig::with_lr(0.1));
        let mut w = [1.0];
        st.step(&mut w, &[1.0]).unwrap();
        let expect = 1.0 - 0.1 / (1.0 + 1e-8);
        assert!((w[0] - expect).abs() < 1e-15);
        assert!((w[0] - 0.9).abs() < 1e-8);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut st = AdamState::<f64>::new(2, AdamConfig::default());
        assert!(matches!(st.step(&mut [0.0; 2], &[0.0; 3]), Err(Error::Config(_))));
    }
}
