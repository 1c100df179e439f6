//! Finite-difference verification of the hand-written backward passes.
//!
//! The check builds a small randomly initialized LSTM-FC model, runs one
//! sample through MSE loss, and compares every analytic parameter gradient
//! against central differences. Rectifier kinks (in ReLU-gate mode and in
//! the FC hidden layers) make finite differences unreliable near zero
//! pre-activations, so draws that land within 1e-3 of a kink are resampled.

use alloc::string::String;
use alloc::vec::Vec;

use crate::neural::{GateActivation, LstmFcNet};
use crate::rng::Rng;
use crate::{Error, Result};

/// Shape of the model under check.
#[derive(Debug, Clone)]
pub struct CheckSpec {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub fc_hidden: Vec<usize>,
    pub ctx_dim: usize,
    pub tau: usize,
    pub gate: GateActivation,
    /// Central-difference step.
    pub step: f64,
}

impl CheckSpec {
    pub fn small(gate: GateActivation) -> Self {
        CheckSpec {
            input_dim: 3,
            hidden_dim: 4,
            fc_hidden: alloc::vec![8, 4],
            ctx_dim: 5,
            tau: 5,
            gate,
            step: 1e-5,
        }
    }
}

/// Max scaled relative error per parameter block.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    entries: Vec<(String, f64)>,
}

impl GradCheckReport {
    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Largest error across blocks; 0 for an empty report.
    pub fn worst(&self) -> f64 {
        self.entries.iter().map(|(_, e)| *e).fold(0.0, f64::max)
    }

    /// Names of blocks exceeding `tolerance`.
    pub fn failures(&self, tolerance: f64) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|(_, e)| *e >= tolerance)
            .map(|(n, _)| n.as_str())
            .collect()
    }
}

/// Scaled relative error: a plain relative error for gradients of ordinary
/// size, absolute-like below 1e-3 so finite-difference noise on near-zero
/// gradients cannot dominate.
fn scaled_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-3)
}

/// Runs the finite-difference suite on one randomly initialized model.
pub fn check_lstm_fc(spec: &CheckSpec, seed: u64) -> Result<GradCheckReport> {
    let rng = Rng::new(seed);

    // Resample until the draw is clear of rectifier kinks.
    let mut attempt = 0u64;
    let (mut net, inputs, ctx, target) = loop {
        let mut draw_rng = rng.derive(attempt);
        let net = LstmFcNet::new(
            spec.input_dim,
            spec.hidden_dim,
            &spec.fc_hidden,
            spec.ctx_dim,
            spec.gate,
            &mut draw_rng,
        );
        let inputs: Vec<f64> = (0..spec.tau * spec.input_dim)
            .map(|_| draw_rng.uniform(-1.0, 1.0))
            .collect();
        let ctx: Vec<f64> = (0..spec.ctx_dim)
            .map(|_| draw_rng.uniform(0.0, 1.0))
            .collect();
        let target = draw_rng.uniform(-1.0, 1.0);

        let (_, cache) = net.forward(&inputs, &ctx)?;
        let gate_clear =
            spec.gate != GateActivation::Relu || cache.lstm.min_abs_gate_preactivation() >= 1e-3;
        let fc_clear = cache.fc.min_abs_hidden_preactivation() >= 1e-3;
        if gate_clear && fc_clear {
            break (net, inputs, ctx, target);
        }
        attempt += 1;
        if attempt > 200 {
            return Err(Error::InvalidConfig(String::from(
                "could not sample a kink-free configuration",
            )));
        }
    };

    let loss_of = |net: &LstmFcNet| -> Result<f64> {
        let (pred, _) = net.forward(&inputs, &ctx)?;
        let d = pred - target;
        Ok(d * d)
    };

    // Analytic gradients.
    let (pred, cache) = net.forward(&inputs, &ctx)?;
    let mut grads = net.zero_grads();
    net.backward_into(&cache, 2.0 * (pred - target), &mut grads);
    let analytic: Vec<(String, Vec<f64>)> = net
        .grad_blocks(&grads)
        .iter()
        .map(|(n, g)| (String::from(*n), g.to_vec()))
        .collect();

    // Central differences, block by block.
    let h = spec.step;
    let mut entries = Vec::with_capacity(analytic.len());
    for (b, (name, a_block)) in analytic.iter().enumerate() {
        let mut worst = 0.0f64;
        for idx in 0..a_block.len() {
            let orig = net.blocks_mut()[b].1[idx];
            net.blocks_mut()[b].1[idx] = orig + h;
            let up = loss_of(&net)?;
            net.blocks_mut()[b].1[idx] = orig - h;
            let down = loss_of(&net)?;
            net.blocks_mut()[b].1[idx] = orig;
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max(scaled_error(a_block[idx], numeric));
        }
        entries.push((name.clone(), worst));
    }

    Ok(GradCheckReport { entries })
}
