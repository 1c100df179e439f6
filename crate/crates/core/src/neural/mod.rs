//! Minimal dense neural-network machinery: 64-bit tensors, an LSTM cell
//! with exact backpropagation through time, a rectifier FC stack, MSE loss,
//! Adam, and finite-difference gradient verification.
//!
//! Everything is scalar f64 with hand-written gradients; the finite
//! difference suite in [`gradcheck`] is the independent check that keeps the
//! backward passes honest.

mod adam;
mod fc;
pub mod gradcheck;
mod lstm;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use fc::{FcCache, FcGrads, FcParams};
pub use lstm::{GateActivation, LstmCache, LstmGrads, LstmParams};
pub use tensor::Tensor2;

use alloc::vec::Vec;

use crate::rng::Rng;
use crate::Result;

/// Mean squared error over a batch and its gradient w.r.t. the predictions.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    debug_assert_eq!(pred.len(), target.len());
    let n = pred.len().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &t) in pred.iter().zip(target) {
        let d = p - t;
        loss += d * d;
        grad.push(2.0 * d / n);
    }
    (loss / n, grad)
}

/// An LSTM encoder followed by an FC head.
///
/// The head consumes the final output-gate vector concatenated with a
/// per-sample context vector and produces one scalar.
#[derive(Debug, Clone)]
pub struct LstmFcNet {
    pub lstm: LstmParams,
    pub fc: FcParams,
}

/// Forward caches of one [`LstmFcNet`] evaluation.
pub struct LstmFcCache {
    lstm: LstmCache,
    fc: FcCache,
}

/// Gradients mirroring [`LstmFcNet`].
#[derive(Debug, Clone)]
pub struct LstmFcGrads {
    pub lstm: LstmGrads,
    pub fc: FcGrads,
}

impl LstmFcNet {
    /// Builds a net with `input_dim` LSTM channels, `hidden` units, FC
    /// hidden widths `fc_hidden`, and a `ctx_dim`-wide context appended to
    /// the LSTM feature.
    pub fn new(
        input_dim: usize,
        hidden: usize,
        fc_hidden: &[usize],
        ctx_dim: usize,
        gate: GateActivation,
        rng: &mut Rng,
    ) -> Self {
        let lstm = LstmParams::new(input_dim, hidden, gate, rng);
        let mut sizes = Vec::with_capacity(fc_hidden.len() + 2);
        sizes.push(hidden + ctx_dim);
        sizes.extend_from_slice(fc_hidden);
        sizes.push(1);
        let fc = FcParams::new(&sizes, rng);
        LstmFcNet { lstm, fc }
    }

    pub fn input_dim(&self) -> usize {
        self.lstm.input_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.lstm.hidden_dim()
    }

    /// Scalar forecast for one window. `inputs` is row-major
    /// `tau x input_dim`.
    pub fn forward(&self, inputs: &[f64], context: &[f64]) -> Result<(f64, LstmFcCache)> {
        let lstm_cache = self.lstm.forward(inputs)?;
        let mut head_in = Vec::with_capacity(self.hidden_dim() + context.len());
        head_in.extend_from_slice(lstm_cache.final_output_gate());
        head_in.extend_from_slice(context);
        let fc_cache = self.fc.forward(&head_in)?;
        let y = fc_cache.output()[0];
        Ok((y, fc_cache_pair(lstm_cache, fc_cache)))
    }

    /// Accumulates gradients for one sample into `grads`.
    pub fn backward_into(&self, cache: &LstmFcCache, d_scalar: f64, grads: &mut LstmFcGrads) {
        let d_head_in = self.fc.backward_into(&cache.fc, &[d_scalar], &mut grads.fc);
        let hidden = self.hidden_dim();
        let d_o_final = &d_head_in[..hidden];
        self.lstm
            .backward_into(&cache.lstm, d_o_final, None, &mut grads.lstm);
    }

    pub fn zero_grads(&self) -> LstmFcGrads {
        LstmFcGrads {
            lstm: self.lstm.zero_grads(),
            fc: self.fc.zero_grads(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.lstm.param_count() + self.fc.param_count()
    }

    /// Named parameter blocks in a fixed, stable order.
    pub fn blocks(&self) -> Vec<(&'static str, &[f64])> {
        let mut v = self.lstm.blocks();
        v.extend(self.fc.blocks());
        v
    }

    pub fn blocks_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut v = self.lstm.blocks_mut();
        v.extend(self.fc.blocks_mut());
        v
    }

    pub fn grad_blocks<'a>(&self, grads: &'a LstmFcGrads) -> Vec<(&'static str, &'a [f64])> {
        let mut v = grads.lstm.blocks();
        v.extend(grads.fc.blocks());
        v
    }
}

fn fc_cache_pair(lstm: LstmCache, fc: FcCache) -> LstmFcCache {
    LstmFcCache { lstm, fc }
}

impl LstmFcGrads {
    pub fn scale(&mut self, s: f64) {
        self.lstm.scale(s);
        self.fc.scale(s);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_oracle_values() {
        let (loss, grad) = mse_loss(&[1.0, 2.0], &[2.0, 4.0]);
        assert!((loss - 2.5).abs() < 1e-15); // (1 + 4) / 2
        assert!((grad[0] - (-1.0)).abs() < 1e-15); // 2 * (1-2) / 2
        assert!((grad[1] - (-2.0)).abs() < 1e-15);

        let (zero, g) = mse_loss(&[3.0, 4.0], &[3.0, 4.0]);
        assert_eq!(zero, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mse_gradient_matches_finite_differences() {
        let target = [0.7, -1.2, 3.4];
        let pred = [1.0, 0.5, 2.0];
        let (_, grad) = mse_loss(&pred, &target);
        let h = 1e-6;
        for i in 0..pred.len() {
            let mut plus = pred;
            let mut minus = pred;
            plus[i] += h;
            minus[i] -= h;
            let num = (mse_loss(&plus, &target).0 - mse_loss(&minus, &target).0) / (2.0 * h);
            assert!((grad[i] - num).abs() < 1e-8, "{} vs {}", grad[i], num);
        }
    }

    #[test]
    fn net_forward_is_deterministic() {
        let mut rng = crate::rng::Rng::new(9);
        let net = LstmFcNet::new(2, 4, &[8], 3, GateActivation::Sigmoid, &mut rng);
        let inputs = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6]; // tau = 3
        let ctx = [1.0, 0.0, 0.0];
        let (a, _) = net.forward(&inputs, &ctx).unwrap();
        let (b, _) = net.forward(&inputs, &ctx).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
