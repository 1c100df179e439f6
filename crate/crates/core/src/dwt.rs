//! Shift-invariant (undecimated) wavelet decomposition of a load signal.
//!
//! The transform is the maximal-overlap variant with periodic boundary
//! handling: every band has the same length as the input and the
//! multiresolution bands add back to the signal exactly. The decomposition
//! keeps four detail bands (finest first) plus one smooth band, which
//! together feed the total-load forecaster as a 5-channel feature matrix.
//!
//! [`causal_band_window`] decomposes only a trailing history buffer, so no
//! sample at or after the forecast position can influence the features.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::FloatExt;
use crate::series::LoadSeries;
use crate::{Error, Result};

/// Number of decomposition levels used throughout the pipeline.
pub const LEVELS: usize = 4;

/// Wavelet filter family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaveletFamily {
    /// Two-tap Haar filters; exact and cheap.
    Haar,
    /// Four-tap Daubechies filters; smoother bands.
    Db4,
}

impl WaveletFamily {
    /// Scaling (low-pass) filter with unit energy.
    fn scaling(&self) -> Vec<f64> {
        match self {
            WaveletFamily::Haar => {
                let s = core::f64::consts::FRAC_1_SQRT_2;
                vec![s, s]
            }
            WaveletFamily::Db4 => {
                let s3 = 3.0f64.sqrt();
                let d = 4.0 * 2.0f64.sqrt();
                vec![
                    (1.0 + s3) / d,
                    (3.0 + s3) / d,
                    (3.0 - s3) / d,
                    (1.0 - s3) / d,
                ]
            }
        }
    }

    /// Wavelet (high-pass) filter via the quadrature mirror relation
    /// `h[k] = (-1)^k g[L-1-k]`.
    fn wavelet(&self) -> Vec<f64> {
        let g = self.scaling();
        let l = g.len();
        (0..l)
            .map(|k| {
                let v = g[l - 1 - k];
                if k % 2 == 0 {
                    v
                } else {
                    -v
                }
            })
            .collect()
    }

    pub fn name(&self) -> &'static str {
        match self {
            WaveletFamily::Haar => "haar",
            WaveletFamily::Db4 => "db4",
        }
    }

    pub fn parse(s: &str) -> Option<WaveletFamily> {
        match s {
            "haar" => Some(WaveletFamily::Haar),
            "db4" => Some(WaveletFamily::Db4),
            _ => None,
        }
    }
}

/// Additive multiresolution bands of one signal.
#[derive(Debug, Clone, PartialEq)]
pub struct DwtStack {
    /// Smooth band (lowest frequency), same length as the input.
    pub low: Vec<f64>,
    /// Detail bands, finest scale first, each the input's length.
    pub highs: Vec<Vec<f64>>,
    pub family: WaveletFamily,
}

impl DwtStack {
    pub fn levels(&self) -> usize {
        self.highs.len()
    }

    /// `low + sum(highs)` — equals the input up to float round-off.
    pub fn reconstruct(&self) -> Vec<f64> {
        let mut out = self.low.clone();
        for band in &self.highs {
            for (o, b) in out.iter_mut().zip(band) {
                *o += b;
            }
        }
        out
    }
}

/// One forward level with the filter upsampled by `stride`; circular.
fn analyze(input: &[f64], g: &[f64], h: &[f64], stride: usize) -> (Vec<f64>, Vec<f64>) {
    let n = input.len() as isize;
    let s = stride as isize;
    let mut smooth = vec![0.0f64; input.len()];
    let mut detail = vec![0.0f64; input.len()];
    for t in 0..n {
        let mut v = 0.0;
        let mut w = 0.0;
        for (k, (&gk, &hk)) in g.iter().zip(h).enumerate() {
            let idx = (t - k as isize * s).rem_euclid(n) as usize;
            v += gk * input[idx];
            w += hk * input[idx];
        }
        smooth[t as usize] = v;
        detail[t as usize] = w;
    }
    (smooth, detail)
}

/// One inverse level; exact for any signal length under periodic wrap.
fn synthesize(smooth: &[f64], detail: &[f64], g: &[f64], h: &[f64], stride: usize) -> Vec<f64> {
    let n = smooth.len() as isize;
    let s = stride as isize;
    let mut out = vec![0.0f64; smooth.len()];
    for t in 0..n {
        let mut v = 0.0;
        for (k, (&gk, &hk)) in g.iter().zip(h).enumerate() {
            let idx = (t + k as isize * s).rem_euclid(n) as usize;
            v += gk * smooth[idx] + hk * detail[idx];
        }
        out[t as usize] = v;
    }
    out
}

/// Decomposes a signal into `levels` detail bands plus one smooth band.
///
/// Bands are the multiresolution projections: each one is synthesized back
/// to the signal domain, so `low + sum(highs) == signal` within round-off
/// and each band is a same-length, time-aligned series.
pub fn decompose(signal: &[f64], family: WaveletFamily, levels: usize) -> Result<DwtStack> {
    let min_len = 1usize << levels;
    if signal.len() < min_len {
        return Err(Error::SignalTooShort {
            len: signal.len(),
            min: min_len,
        });
    }
    if levels == 0 {
        return Err(Error::InvalidConfig(alloc::string::String::from(
            "levels must be positive",
        )));
    }
    for (i, &v) in signal.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                what: "dwt input",
                index: i,
            });
        }
    }

    // Unit-sum filters: the transform-domain coefficients use g/sqrt(2),
    // which keeps a constant signal's smooth band at the constant itself.
    let g: Vec<f64> = family
        .scaling()
        .iter()
        .map(|c| c * core::f64::consts::FRAC_1_SQRT_2)
        .collect();
    let h: Vec<f64> = family
        .wavelet()
        .iter()
        .map(|c| c * core::f64::consts::FRAC_1_SQRT_2)
        .collect();

    // Forward cascade: coefficients per level.
    let mut details = Vec::with_capacity(levels);
    let mut smooth = signal.to_vec();
    for j in 0..levels {
        let (v, w) = analyze(&smooth, &g, &h, 1 << j);
        details.push(w);
        smooth = v;
    }

    // Multiresolution projection: run each level's coefficients back down
    // through the inverse cascade with everything else zeroed.
    let zeros = vec![0.0f64; signal.len()];
    let project = |top_smooth: &[f64], top_detail: &[f64], level: usize| -> Vec<f64> {
        let mut cur = synthesize(top_smooth, top_detail, &g, &h, 1 << (level - 1));
        for j in (1..level).rev() {
            cur = synthesize(&cur, &zeros, &g, &h, 1 << (j - 1));
        }
        cur
    };

    let highs: Vec<Vec<f64>> = details
        .iter()
        .enumerate()
        .map(|(i, w)| project(&zeros, w, i + 1))
        .collect();
    let low = project(&smooth, &zeros, levels);

    Ok(DwtStack { low, highs, family })
}

/// Decomposes only the history buffer `[t - buffer_len, t)` of a series and
/// returns the last `tau` rows of its bands.
///
/// The buffer is reflection-extended before the periodic transform:
/// wrapping the raw buffer would join its newest sample to its oldest,
/// and that artificial jump bleeds into the detail bands exactly at the
/// rows being read. Reflection keeps both joins smooth.
///
/// The result is row-major `tau x (levels + 1)` with the smooth band first
/// in each row, then details finest to coarsest. Nothing at position `t` or
/// later is read, so the features are causal by construction.
pub fn causal_band_window(
    series: &LoadSeries,
    t: usize,
    tau: usize,
    buffer_len: usize,
    family: WaveletFamily,
) -> Result<Vec<f64>> {
    let min_len = 1usize << LEVELS;
    if buffer_len < min_len || buffer_len < tau {
        return Err(Error::SignalTooShort {
            len: buffer_len,
            min: min_len.max(tau),
        });
    }
    if t < buffer_len || t > series.len() {
        return Err(Error::InsufficientHistory {
            have: t.min(series.len()),
            need: buffer_len,
        });
    }
    if !series.range_valid(t - buffer_len, t) {
        return Err(Error::InsufficientHistory {
            have: 0,
            need: buffer_len,
        });
    }

    let buffer = &series.values()[t - buffer_len..t];
    let mut extended = Vec::with_capacity(2 * buffer_len);
    extended.extend_from_slice(buffer);
    extended.extend(buffer.iter().rev());
    let stack = decompose(&extended, family, LEVELS)?;

    let bands = LEVELS + 1;
    let mut out = Vec::with_capacity(tau * bands);
    for r in 0..tau {
        let idx = buffer_len - tau + r;
        out.push(stack.low[idx]);
        for band in &stack.highs {
            out.push(band[idx]);
        }
    }
    Ok(out)
}
