//! Adam optimizer over flat parameter blocks.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::FloatExt;

/// Hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment accumulators for one optimized entity.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    pub config: AdamConfig,
}

impl AdamState {
    /// `param_count` must equal the total length of the blocks later passed
    /// to [`AdamState::update`].
    pub fn new(param_count: usize, config: AdamConfig) -> Self {
        AdamState {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            step: 0,
            config,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Bias-corrected update applied in place. Blocks must arrive in the
    /// same order every call.
    pub fn update(
        &mut self,
        params: &mut [(&'static str, &mut [f64])],
        grads: &[(&'static str, &[f64])],
    ) {
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);

        let mut k = 0usize;
        for ((pname, pblock), (gname, gblock)) in params.iter_mut().zip(grads) {
            debug_assert_eq!(pname, gname, "parameter/gradient block order mismatch");
            debug_assert_eq!(pblock.len(), gblock.len());
            for (p, &g) in pblock.iter_mut().zip(gblock.iter()) {
                self.m[k] = c.beta1 * self.m[k] + (1.0 - c.beta1) * g;
                self.v[k] = c.beta2 * self.v[k] + (1.0 - c.beta2) * g * g;
                let m_hat = self.m[k] / bc1;
                let v_hat = self.v[k] / bc2;
                *p -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
                k += 1;
            }
        }
        debug_assert_eq!(k, self.m.len(), "parameter count drifted");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut state = AdamState::new(3, AdamConfig::with_lr(0.1));
        let mut p = [1.0, -2.0, 0.5];
        let g = [0.0, 0.0, 0.0];
        state.update(&mut [("p", &mut p)], &[("p", &g)]);
        assert_eq!(p, [1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_closed_form() {
        // One scalar step with g = 1, lr = 0.1: bias-corrected ratio is
        // 1 / (1 + eps'), so the update is ~ -0.1.
        let mut state = AdamState::new(1, AdamConfig::with_lr(0.1));
        let mut p = [0.0];
        let g = [1.0];
        state.update(&mut [("p", &mut p)], &[("p", &g)]);
        assert!((p[0] + 0.1).abs() < 1e-8, "got {}", p[0]);
    }

    #[test]
    fn identical_runs_are_bitwise_identical() {
        let run = || {
            let mut state = AdamState::new(2, AdamConfig::with_lr(0.01));
            let mut p = [0.3f64, -0.7];
            for i in 0..50 {
                let g = [0.1 * (i as f64 % 3.0 - 1.0), -0.2];
                state.update(&mut [("p", &mut p)], &[("p", &g)]);
            }
            p
        };
        let a = run();
        let b = run();
        assert_eq!(a[0].to_bits(), b[0].to_bits());
        assert_eq!(a[1].to_bits(), b[1].to_bits());
    }
}
