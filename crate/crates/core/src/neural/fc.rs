//! Fully connected stack: rectifier hidden layers, linear output.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::FloatExt;
use crate::neural::Tensor2;
use crate::rng::Rng;
use crate::{Error, Result};

/// Affine layers with ReLU between them and a linear final layer.
#[derive(Debug, Clone)]
pub struct FcParams {
    sizes: Vec<usize>,
    pub weights: Vec<Tensor2>,
    pub biases: Vec<Vec<f64>>,
}

/// Per-layer activations of one forward pass. `activations[0]` is the
/// input, `activations[L]` the output.
pub struct FcCache {
    activations: Vec<Vec<f64>>,
    preactivations: Vec<Vec<f64>>,
}

impl FcCache {
    pub fn output(&self) -> &[f64] {
        &self.activations[self.activations.len() - 1]
    }

    /// Smallest |pre-activation| across hidden layers (kink proximity).
    pub fn min_abs_hidden_preactivation(&self) -> f64 {
        let mut min = f64::INFINITY;
        // The last pre-activation feeds the linear output, which has no kink.
        for layer in &self.preactivations[..self.preactivations.len().saturating_sub(1)] {
            for a in layer {
                min = min.min(a.abs());
            }
        }
        min
    }
}

/// Gradients mirroring [`FcParams`].
#[derive(Debug, Clone)]
pub struct FcGrads {
    pub weights: Vec<Tensor2>,
    pub biases: Vec<Vec<f64>>,
}

impl FcGrads {
    pub fn scale(&mut self, s: f64) {
        for w in &mut self.weights {
            w.scale(s);
        }
        for b in &mut self.biases {
            for v in b.iter_mut() {
                *v *= s;
            }
        }
    }

    pub fn blocks(&self) -> Vec<(&'static str, &[f64])> {
        let mut v = Vec::with_capacity(2 * self.weights.len());
        for (l, w) in self.weights.iter().enumerate() {
            v.push((layer_name(l, true), w.data()));
        }
        for (l, b) in self.biases.iter().enumerate() {
            v.push((layer_name(l, false), b.as_slice()));
        }
        v
    }
}

// Fixed names keep checkpoint entries and gradient reports stable; four
// layers is more than the pipeline ever builds.
const W_NAMES: [&str; 4] = ["fc.w0", "fc.w1", "fc.w2", "fc.w3"];
const B_NAMES: [&str; 4] = ["fc.b0", "fc.b1", "fc.b2", "fc.b3"];

fn layer_name(l: usize, weight: bool) -> &'static str {
    if weight {
        W_NAMES[l]
    } else {
        B_NAMES[l]
    }
}

impl FcParams {
    /// `sizes` runs `[input, hidden.., output]`; uniform ±1/sqrt(fan_in)
    /// weights, zero biases.
    pub fn new(sizes: &[usize], rng: &mut Rng) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        assert!(sizes.len() <= W_NAMES.len() + 1, "too many layers");
        let mut weights = Vec::with_capacity(sizes.len() - 1);
        let mut biases = Vec::with_capacity(sizes.len() - 1);
        for l in 0..sizes.len() - 1 {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            weights.push(Tensor2::from_fn(fan_out, fan_in, |_, _| {
                rng.uniform(-bound, bound)
            }));
            biases.push(vec![0.0; fan_out]);
        }
        FcParams {
            sizes: sizes.to_vec(),
            weights,
            biases,
        }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        self.sizes[self.sizes.len() - 1]
    }

    pub fn layer_count(&self) -> usize {
        self.weights.len()
    }

    pub fn param_count(&self) -> usize {
        self.weights
            .iter()
            .map(|w| w.rows() * w.cols())
            .sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn blocks(&self) -> Vec<(&'static str, &[f64])> {
        let mut v = Vec::with_capacity(2 * self.weights.len());
        for (l, w) in self.weights.iter().enumerate() {
            v.push((layer_name(l, true), w.data()));
        }
        for (l, b) in self.biases.iter().enumerate() {
            v.push((layer_name(l, false), b.as_slice()));
        }
        v
    }

    pub fn blocks_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut v = Vec::with_capacity(2 * self.weights.len());
        for (l, w) in self.weights.iter_mut().enumerate() {
            v.push((layer_name(l, true), w.data_mut()));
        }
        for (l, b) in self.biases.iter_mut().enumerate() {
            v.push((layer_name(l, false), b.as_mut_slice()));
        }
        v
    }

    pub fn zero_grads(&self) -> FcGrads {
        FcGrads {
            weights: self
                .weights
                .iter()
                .map(|w| Tensor2::zeros(w.rows(), w.cols()))
                .collect(),
            biases: self.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn forward(&self, input: &[f64]) -> Result<FcCache> {
        if input.len() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                expected: (1, self.input_dim()),
                got: (1, input.len()),
            });
        }
        let layers = self.layer_count();
        let mut activations = Vec::with_capacity(layers + 1);
        let mut preactivations = Vec::with_capacity(layers);
        activations.push(input.to_vec());
        for l in 0..layers {
            let mut a = self.weights[l].matvec(&activations[l]);
            for (ak, bk) in a.iter_mut().zip(&self.biases[l]) {
                *ak += bk;
            }
            preactivations.push(a.clone());
            let out = if l + 1 < layers {
                a.iter().map(|&v| v.max(0.0)).collect()
            } else {
                a
            };
            activations.push(out);
        }
        Ok(FcCache {
            activations,
            preactivations,
        })
    }

    /// Accumulates parameter gradients into `grads` and returns the gradient
    /// w.r.t. the input vector.
    pub fn backward_into(
        &self,
        cache: &FcCache,
        d_output: &[f64],
        grads: &mut FcGrads,
    ) -> Vec<f64> {
        let layers = self.layer_count();
        let mut d_act = d_output.to_vec();
        for l in (0..layers).rev() {
            let d_pre: Vec<f64> = if l + 1 < layers {
                // Rectifier: pass gradient only where the unit fired.
                cache.activations[l + 1]
                    .iter()
                    .zip(&d_act)
                    .map(|(&v, &d)| if v > 0.0 { d } else { 0.0 })
                    .collect()
            } else {
                d_act.clone()
            };
            grads.weights[l].add_outer(&d_pre, &cache.activations[l]);
            for (g, d) in grads.biases[l].iter_mut().zip(&d_pre) {
                *g += d;
            }
            let mut d_in = vec![0.0f64; self.weights[l].cols()];
            self.weights[l].matvec_transpose_add(&d_pre, &mut d_in);
            d_act = d_in;
        }
        d_act
    }
}
