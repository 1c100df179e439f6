//! Time-indexed load series, resampling, normalization, and supervised
//! windowing.
//!
//! All loads are handled in kW internally; raw meter readings in watts are
//! converted once at resampling. Gaps are carried as a validity mask rather
//! than imputed, and every downstream consumer must respect the mask.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Seconds per hourly sample.
pub const HOUR: i64 = 3600;

/// Dimension of [`context_features`]: 7 weekday slots + 24 hour slots.
pub const CONTEXT_DIM: usize = 31;

/// Uniform time axis: `timestamp(i) = start + i * step`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeIndex {
    start: i64,
    step: i64,
    len: usize,
}

impl TimeIndex {
    pub fn new(start: i64, step: i64, len: usize) -> Result<Self> {
        if step <= 0 {
            return Err(Error::InvalidConfig(String::from(
                "time step must be positive",
            )));
        }
        Ok(TimeIndex { start, step, len })
    }

    /// Hourly index starting at `start` epoch-seconds.
    pub fn hourly(start: i64, len: usize) -> Self {
        TimeIndex {
            start,
            step: HOUR,
            len,
        }
    }

    pub fn start(&self) -> i64 {
        self.start
    }

    pub fn step(&self) -> i64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Epoch-seconds of sample `i`.
    pub fn timestamp(&self, i: usize) -> i64 {
        self.start + self.step * i as i64
    }

    /// Position of the sample whose timestamp equals `ts`, if on-grid and in range.
    pub fn position(&self, ts: i64) -> Option<usize> {
        let off = ts - self.start;
        if off < 0 || off % self.step != 0 {
            return None;
        }
        let i = (off / self.step) as usize;
        (i < self.len).then_some(i)
    }
}

/// A uniformly sampled load sequence in kW with per-sample validity.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadSeries {
    index: TimeIndex,
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl LoadSeries {
    /// Builds a series, checking that every valid value is finite and >= 0.
    pub fn new(index: TimeIndex, values: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        if values.len() != index.len() || mask.len() != index.len() {
            return Err(Error::LengthMismatch {
                left: index.len(),
                right: values.len(),
            });
        }
        for (i, (&v, &ok)) in values.iter().zip(&mask).enumerate() {
            if ok && (!v.is_finite() || v < 0.0) {
                return Err(Error::NonFinite {
                    what: "load series",
                    index: i,
                });
            }
        }
        Ok(LoadSeries {
            index,
            values,
            mask,
        })
    }

    /// Fully valid series.
    pub fn from_values(index: TimeIndex, values: Vec<f64>) -> Result<Self> {
        let mask = vec![true; values.len()];
        LoadSeries::new(index, values, mask)
    }

    pub fn index(&self) -> &TimeIndex {
        &self.index
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn is_valid(&self, i: usize) -> bool {
        self.mask[i]
    }

    /// Value at `i`, or `None` when masked.
    pub fn get(&self, i: usize) -> Option<f64> {
        self.mask[i].then(|| self.values[i])
    }

    /// Valid values in chronological order.
    pub fn valid_values(&self) -> Vec<f64> {
        self.values
            .iter()
            .zip(&self.mask)
            .filter_map(|(&v, &ok)| ok.then_some(v))
            .collect()
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&ok| ok).count()
    }

    /// True when every sample in `[from, to)` is valid.
    pub fn range_valid(&self, from: usize, to: usize) -> bool {
        self.mask[from..to].iter().all(|&ok| ok)
    }

    /// Marks sample `i` invalid.
    pub(crate) fn invalidate(&mut self, i: usize) {
        self.mask[i] = false;
    }

    /// Truncated copy covering positions `[from, to)`.
    pub fn slice(&self, from: usize, to: usize) -> Result<LoadSeries> {
        if from >= to || to > self.len() {
            return Err(Error::EmptyRange);
        }
        let index = TimeIndex {
            start: self.index.timestamp(from),
            step: self.index.step,
            len: to - from,
        };
        Ok(LoadSeries {
            index,
            values: self.values[from..to].to_vec(),
            mask: self.mask[from..to].to_vec(),
        })
    }
}

/// Unit of raw samples fed to [`resample_hourly`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputUnit {
    Watts,
    Kilowatts,
}

impl InputUnit {
    fn to_kw(self, v: f64) -> f64 {
        match self {
            InputUnit::Watts => v / 1000.0,
            InputUnit::Kilowatts => v,
        }
    }
}

/// Averages raw `(epoch-seconds, value)` samples into one sample per
/// wall-clock hour.
///
/// The expected number of raw samples per hour is inferred from the median
/// inter-sample interval; hours covered by fewer than 50% of that count are
/// masked invalid. Output is always in kW.
pub fn resample_hourly(raw: &[(i64, f64)], unit: InputUnit) -> Result<LoadSeries> {
    if raw.is_empty() {
        return Err(Error::EmptyInput("resample_hourly"));
    }
    for (i, w) in raw.windows(2).enumerate() {
        if w[1].0 < w[0].0 {
            return Err(Error::NonMonotoneTimestamps { index: i + 1 });
        }
    }
    for (i, &(_, v)) in raw.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                what: "raw samples",
                index: i,
            });
        }
    }

    let expected_per_hour = if raw.len() < 2 {
        1.0
    } else {
        let mut gaps: Vec<i64> = raw.windows(2).map(|w| w[1].0 - w[0].0).collect();
        gaps.sort_unstable();
        let median = gaps[gaps.len() / 2].max(1);
        (HOUR as f64 / median as f64).max(1.0)
    };

    let first_hour = raw[0].0.div_euclid(HOUR);
    let last_hour = raw[raw.len() - 1].0.div_euclid(HOUR);
    let len = (last_hour - first_hour + 1) as usize;

    let mut sums = vec![0.0f64; len];
    let mut counts = vec![0usize; len];
    for &(ts, v) in raw {
        let h = (ts.div_euclid(HOUR) - first_hour) as usize;
        sums[h] += unit.to_kw(v);
        counts[h] += 1;
    }

    let mut values = vec![0.0f64; len];
    let mut mask = vec![false; len];
    for h in 0..len {
        if counts[h] as f64 >= 0.5 * expected_per_hour {
            let v = sums[h] / counts[h] as f64;
            // Meters occasionally report tiny negative power; clamp to zero.
            values[h] = v.max(0.0);
            mask[h] = true;
        }
    }

    LoadSeries::new(TimeIndex::hourly(first_hour * HOUR, len), values, mask)
}

/// Min-max normalization to [0, 1]; a constant vector maps to all zeros.
pub fn minmax_normalize(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::EmptyInput("minmax_normalize"));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = hi - lo;
    if span <= 0.0 {
        return Ok(vec![0.0; values.len()]);
    }
    Ok(values.iter().map(|&v| (v - lo) / span).collect())
}

/// Calendar context for a timestamp: one-hot weekday (Monday = slot 0)
/// concatenated with one-hot hour of day, both in UTC.
pub fn context_features(ts: i64) -> Vec<f64> {
    let mut v = vec![0.0f64; CONTEXT_DIM];
    // 1970-01-01 was a Thursday; with Monday = 0 that is weekday 3.
    let weekday = (ts.div_euclid(86_400) + 3).rem_euclid(7) as usize;
    let hour = ts.div_euclid(HOUR).rem_euclid(24) as usize;
    v[weekday] = 1.0;
    v[7 + hour] = 1.0;
    v
}

/// Supervised one-step-ahead dataset: for each usable position `t`, the
/// input is every channel over `[t - tau, t)` and the target is channel 0
/// at `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    num_samples: usize,
    tau: usize,
    channels: usize,
    ctx_dim: usize,
    /// Row-major `(num_samples, tau, channels)`.
    inputs: Vec<f64>,
    /// Row-major `(num_samples, ctx_dim)`.
    context: Vec<f64>,
    targets: Vec<f64>,
    /// Target position of each sample in the source series.
    positions: Vec<usize>,
}

impl WindowedDataset {
    pub fn num_samples(&self) -> usize {
        self.num_samples
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn ctx_dim(&self) -> usize {
        self.ctx_dim
    }

    /// Input window of sample `s` as a `(tau * channels)` slice,
    /// time-major (step 0 first, channels contiguous within a step).
    pub fn input(&self, s: usize) -> &[f64] {
        let w = self.tau * self.channels;
        &self.inputs[s * w..(s + 1) * w]
    }

    pub fn input_mut(&mut self, s: usize) -> &mut [f64] {
        let w = self.tau * self.channels;
        &mut self.inputs[s * w..(s + 1) * w]
    }

    pub fn context(&self, s: usize) -> &[f64] {
        &self.context[s * self.ctx_dim..(s + 1) * self.ctx_dim]
    }

    pub fn target(&self, s: usize) -> f64 {
        self.targets[s]
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn position(&self, s: usize) -> usize {
        self.positions[s]
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub(crate) fn from_parts(
        tau: usize,
        channels: usize,
        ctx_dim: usize,
        inputs: Vec<f64>,
        context: Vec<f64>,
        targets: Vec<f64>,
        positions: Vec<usize>,
    ) -> Self {
        let num_samples = targets.len();
        debug_assert_eq!(inputs.len(), num_samples * tau * channels);
        debug_assert_eq!(context.len(), num_samples * ctx_dim);
        WindowedDataset {
            num_samples,
            tau,
            channels,
            ctx_dim,
            inputs,
            context,
            targets,
            positions,
        }
    }
}

/// Positions `t` with `min_history <= t < len` whose history window
/// `[t - tau, t)` is valid on every channel and whose target (channel 0 at
/// `t`) is valid. `min_history >= tau` widens the required history, e.g. for
/// transform buffers.
pub(crate) fn usable_positions(
    channels: &[&LoadSeries],
    tau: usize,
    min_history: usize,
) -> Vec<usize> {
    debug_assert!(min_history >= tau);
    let len = channels[0].len();
    let mut out = Vec::new();
    'pos: for t in min_history..len {
        if !channels[0].is_valid(t) {
            continue;
        }
        // Channel 0 must additionally be valid over the full history buffer.
        if !channels[0].range_valid(t - min_history, t) {
            continue;
        }
        for ch in &channels[1..] {
            if !ch.range_valid(t - tau, t) || !ch.is_valid(t) {
                continue 'pos;
            }
        }
        out.push(t);
    }
    out
}

/// Builds a [`WindowedDataset`] from aligned channels. Channel 0 provides
/// the forecast target.
pub fn make_windows<F>(
    channels: &[&LoadSeries],
    context_fn: F,
    tau: usize,
) -> Result<WindowedDataset>
where
    F: Fn(i64) -> Vec<f64>,
{
    if channels.is_empty() {
        return Err(Error::EmptyInput("make_windows"));
    }
    let index = *channels[0].index();
    for ch in channels {
        if *ch.index() != index {
            return Err(Error::IndexMismatch);
        }
    }
    let m = index.len();
    if tau == 0 || tau >= m {
        return Err(Error::WindowTooLong { tau, len: m });
    }

    // Target validity here means the window AND the target are valid on
    // every channel: the window rows carry all channels.
    let len = m;
    let mut positions = Vec::new();
    'pos: for t in tau..len {
        for ch in channels {
            if !ch.range_valid(t - tau, t) {
                continue 'pos;
            }
        }
        if !channels[0].is_valid(t) {
            continue;
        }
        positions.push(t);
    }

    let ctx_dim = context_fn(index.timestamp(0)).len();
    let n = positions.len();
    let c = channels.len();
    let mut inputs = Vec::with_capacity(n * tau * c);
    let mut context = Vec::with_capacity(n * ctx_dim);
    let mut targets = Vec::with_capacity(n);
    for &t in &positions {
        for r in 0..tau {
            for ch in channels {
                inputs.push(ch.values()[t - tau + r]);
            }
        }
        context.extend_from_slice(&context_fn(index.timestamp(t)));
        targets.push(channels[0].values()[t]);
    }

    Ok(WindowedDataset::from_parts(
        tau, c, ctx_dim, inputs, context, targets, positions,
    ))
}
