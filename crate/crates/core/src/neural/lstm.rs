//! Single-layer LSTM cell with cached forward and exact BPTT backward.
//!
//! Gates operate on the concatenation `[h_prev, x_t]`. The candidate cell
//! always uses tanh; the forget/input/output gates use a configurable
//! activation — sigmoid by default, with a rectifier mode selectable for
//! comparison (unbounded gates, so expect less stable training).

use alloc::vec;
use alloc::vec::Vec;

use crate::math::FloatExt;
use crate::neural::Tensor2;
use crate::rng::Rng;
use crate::{Error, Result};

/// Activation used by the forget, input, and output gates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateActivation {
    Sigmoid,
    Relu,
}

impl GateActivation {
    #[inline]
    fn apply(&self, a: f64) -> f64 {
        match self {
            GateActivation::Sigmoid => 1.0 / (1.0 + (-a).exp()),
            GateActivation::Relu => a.max(0.0),
        }
    }

    /// Derivative expressed through the activated value (both activations
    /// allow it: sigmoid' = v(1-v), relu' = [v > 0]).
    #[inline]
    fn derivative_from_value(&self, v: f64) -> f64 {
        match self {
            GateActivation::Sigmoid => v * (1.0 - v),
            GateActivation::Relu => {
                if v > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GateActivation::Sigmoid => "sigmoid",
            GateActivation::Relu => "relu",
        }
    }

    pub fn parse(s: &str) -> Option<GateActivation> {
        match s {
            "sigmoid" => Some(GateActivation::Sigmoid),
            "relu" => Some(GateActivation::Relu),
            _ => None,
        }
    }
}

/// LSTM parameters: four gate matrices over `[h_prev, x]` plus biases.
#[derive(Debug, Clone)]
pub struct LstmParams {
    input_dim: usize,
    hidden_dim: usize,
    pub w_f: Tensor2,
    pub w_i: Tensor2,
    pub w_c: Tensor2,
    pub w_o: Tensor2,
    pub b_f: Vec<f64>,
    pub b_i: Vec<f64>,
    pub b_c: Vec<f64>,
    pub b_o: Vec<f64>,
    pub gate: GateActivation,
}

/// Per-step values kept for the backward pass.
struct StepCache {
    /// `[h_prev, x_t]`.
    z: Vec<f64>,
    /// Gate pre-activations, kept for kink detection in gradient checks.
    a_f: Vec<f64>,
    a_i: Vec<f64>,
    a_o: Vec<f64>,
    f: Vec<f64>,
    i: Vec<f64>,
    cand: Vec<f64>,
    o: Vec<f64>,
    c_prev: Vec<f64>,
    tanh_c: Vec<f64>,
}

/// Forward trajectories of one sequence.
pub struct LstmCache {
    steps: Vec<StepCache>,
    h_final: Vec<f64>,
}

impl LstmCache {
    /// Output-gate activation at the last step.
    pub fn final_output_gate(&self) -> &[f64] {
        &self.steps[self.steps.len() - 1].o
    }

    pub fn final_hidden(&self) -> &[f64] {
        &self.h_final
    }

    pub fn step_count(&self) -> usize {
        self.steps.len()
    }

    /// Smallest |pre-activation| over all gate units and steps; gradient
    /// checks with rectifier gates resample inputs when this is tiny.
    pub fn min_abs_gate_preactivation(&self) -> f64 {
        let mut min = f64::INFINITY;
        for s in &self.steps {
            for a in s.a_f.iter().chain(&s.a_i).chain(&s.a_o) {
                min = min.min(a.abs());
            }
        }
        min
    }
}

/// Gradients mirroring [`LstmParams`].
#[derive(Debug, Clone)]
pub struct LstmGrads {
    pub w_f: Tensor2,
    pub w_i: Tensor2,
    pub w_c: Tensor2,
    pub w_o: Tensor2,
    pub b_f: Vec<f64>,
    pub b_i: Vec<f64>,
    pub b_c: Vec<f64>,
    pub b_o: Vec<f64>,
}

impl LstmGrads {
    pub fn scale(&mut self, s: f64) {
        for w in [&mut self.w_f, &mut self.w_i, &mut self.w_c, &mut self.w_o] {
            w.scale(s);
        }
        for b in [&mut self.b_f, &mut self.b_i, &mut self.b_c, &mut self.b_o] {
            for v in b.iter_mut() {
                *v *= s;
            }
        }
    }

    pub fn blocks(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("lstm.w_f", self.w_f.data()),
            ("lstm.w_i", self.w_i.data()),
            ("lstm.w_c", self.w_c.data()),
            ("lstm.w_o", self.w_o.data()),
            ("lstm.b_f", &self.b_f),
            ("lstm.b_i", &self.b_i),
            ("lstm.b_c", &self.b_c),
            ("lstm.b_o", &self.b_o),
        ]
    }
}

impl LstmParams {
    /// Uniform ±1/sqrt(fan_in) weights, zero biases except the forget-gate
    /// bias at +1.
    pub fn new(input_dim: usize, hidden_dim: usize, gate: GateActivation, rng: &mut Rng) -> Self {
        let fan_in = hidden_dim + input_dim;
        let bound = 1.0 / (fan_in as f64).sqrt();
        let mut w = || Tensor2::from_fn(hidden_dim, fan_in, |_, _| rng.uniform(-bound, bound));
        let w_f = w();
        let w_i = w();
        let w_c = w();
        let w_o = w();
        LstmParams {
            input_dim,
            hidden_dim,
            w_f,
            w_i,
            w_c,
            w_o,
            b_f: vec![1.0; hidden_dim],
            b_i: vec![0.0; hidden_dim],
            b_c: vec![0.0; hidden_dim],
            b_o: vec![0.0; hidden_dim],
            gate,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn param_count(&self) -> usize {
        4 * self.hidden_dim * (self.hidden_dim + self.input_dim) + 4 * self.hidden_dim
    }

    pub fn blocks(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("lstm.w_f", self.w_f.data()),
            ("lstm.w_i", self.w_i.data()),
            ("lstm.w_c", self.w_c.data()),
            ("lstm.w_o", self.w_o.data()),
            ("lstm.b_f", &self.b_f),
            ("lstm.b_i", &self.b_i),
            ("lstm.b_c", &self.b_c),
            ("lstm.b_o", &self.b_o),
        ]
    }

    pub fn blocks_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("lstm.w_f", self.w_f.data_mut()),
            ("lstm.w_i", self.w_i.data_mut()),
            ("lstm.w_c", self.w_c.data_mut()),
            ("lstm.w_o", self.w_o.data_mut()),
            ("lstm.b_f", &mut self.b_f),
            ("lstm.b_i", &mut self.b_i),
            ("lstm.b_c", &mut self.b_c),
            ("lstm.b_o", &mut self.b_o),
        ]
    }

    pub fn zero_grads(&self) -> LstmGrads {
        let fan_in = self.hidden_dim + self.input_dim;
        LstmGrads {
            w_f: Tensor2::zeros(self.hidden_dim, fan_in),
            w_i: Tensor2::zeros(self.hidden_dim, fan_in),
            w_c: Tensor2::zeros(self.hidden_dim, fan_in),
            w_o: Tensor2::zeros(self.hidden_dim, fan_in),
            b_f: vec![0.0; self.hidden_dim],
            b_i: vec![0.0; self.hidden_dim],
            b_c: vec![0.0; self.hidden_dim],
            b_o: vec![0.0; self.hidden_dim],
        }
    }

    /// Runs the cell over `inputs` (row-major `tau x input_dim`) from zero
    /// initial states, keeping everything the backward pass needs.
    pub fn forward(&self, inputs: &[f64]) -> Result<LstmCache> {
        if self.input_dim == 0 || !inputs.len().is_multiple_of(self.input_dim) || inputs.is_empty()
        {
            return Err(Error::ShapeMismatch {
                expected: (1, self.input_dim.max(1)),
                got: (1, inputs.len()),
            });
        }
        let tau = inputs.len() / self.input_dim;
        let hd = self.hidden_dim;

        let mut h = vec![0.0f64; hd];
        let mut c = vec![0.0f64; hd];
        let mut steps = Vec::with_capacity(tau);

        for t in 0..tau {
            let x = &inputs[t * self.input_dim..(t + 1) * self.input_dim];
            let mut z = Vec::with_capacity(hd + self.input_dim);
            z.extend_from_slice(&h);
            z.extend_from_slice(x);

            let mut a_f = self.w_f.matvec(&z);
            let mut a_i = self.w_i.matvec(&z);
            let mut a_c = self.w_c.matvec(&z);
            let mut a_o = self.w_o.matvec(&z);
            for k in 0..hd {
                a_f[k] += self.b_f[k];
                a_i[k] += self.b_i[k];
                a_c[k] += self.b_c[k];
                a_o[k] += self.b_o[k];
            }

            let f: Vec<f64> = a_f.iter().map(|&a| self.gate.apply(a)).collect();
            let i: Vec<f64> = a_i.iter().map(|&a| self.gate.apply(a)).collect();
            let cand: Vec<f64> = a_c.iter().map(|&a| a.tanh()).collect();
            let o: Vec<f64> = a_o.iter().map(|&a| self.gate.apply(a)).collect();

            let c_prev = c.clone();
            let mut tanh_c = vec![0.0f64; hd];
            for k in 0..hd {
                c[k] = f[k] * c_prev[k] + i[k] * cand[k];
                tanh_c[k] = c[k].tanh();
                h[k] = o[k] * tanh_c[k];
                if !c[k].is_finite() || !h[k].is_finite() {
                    return Err(Error::NonFinite {
                        what: "lstm state",
                        index: t,
                    });
                }
            }

            steps.push(StepCache {
                z,
                a_f,
                a_i,
                a_o,
                f,
                i,
                cand,
                o,
                c_prev,
                tanh_c,
            });
        }

        Ok(LstmCache { steps, h_final: h })
    }

    /// BPTT. Upstream gradients arrive on the final output gate
    /// (`d_o_final`) and optionally on the final hidden state
    /// (`d_h_final`); gradients accumulate into `grads`.
    pub fn backward_into(
        &self,
        cache: &LstmCache,
        d_o_final: &[f64],
        d_h_final: Option<&[f64]>,
        grads: &mut LstmGrads,
    ) {
        let hd = self.hidden_dim;
        let tau = cache.steps.len();
        let zdim = hd + self.input_dim;

        let mut dh_next = vec![0.0f64; hd];
        let mut dc_next = vec![0.0f64; hd];

        for t in (0..tau).rev() {
            let s = &cache.steps[t];

            let mut dh = dh_next.clone();
            let mut do_v = vec![0.0f64; hd];
            if t + 1 == tau {
                if let Some(dhf) = d_h_final {
                    for k in 0..hd {
                        dh[k] += dhf[k];
                    }
                }
                do_v.copy_from_slice(d_o_final);
            }

            let mut dc = dc_next.clone();
            for k in 0..hd {
                // h = o * tanh(c)
                do_v[k] += dh[k] * s.tanh_c[k];
                dc[k] += dh[k] * s.o[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]);
            }

            let mut da_f = vec![0.0f64; hd];
            let mut da_i = vec![0.0f64; hd];
            let mut da_c = vec![0.0f64; hd];
            let mut da_o = vec![0.0f64; hd];
            for k in 0..hd {
                da_f[k] = dc[k] * s.c_prev[k] * self.gate.derivative_from_value(s.f[k]);
                da_i[k] = dc[k] * s.cand[k] * self.gate.derivative_from_value(s.i[k]);
                da_c[k] = dc[k] * s.i[k] * (1.0 - s.cand[k] * s.cand[k]);
                da_o[k] = do_v[k] * self.gate.derivative_from_value(s.o[k]);
            }

            grads.w_f.add_outer(&da_f, &s.z);
            grads.w_i.add_outer(&da_i, &s.z);
            grads.w_c.add_outer(&da_c, &s.z);
            grads.w_o.add_outer(&da_o, &s.z);
            for k in 0..hd {
                grads.b_f[k] += da_f[k];
                grads.b_i[k] += da_i[k];
                grads.b_c[k] += da_c[k];
                grads.b_o[k] += da_o[k];
            }

            let mut dz = vec![0.0f64; zdim];
            self.w_f.matvec_transpose_add(&da_f, &mut dz);
            self.w_i.matvec_transpose_add(&da_i, &mut dz);
            self.w_c.matvec_transpose_add(&da_c, &mut dz);
            self.w_o.matvec_transpose_add(&da_o, &mut dz);

            dh_next.copy_from_slice(&dz[..hd]);
            for k in 0..hd {
                dc_next[k] = dc[k] * s.f[k];
            }
        }
    }
}
