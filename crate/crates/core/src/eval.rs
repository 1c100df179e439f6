//! Forecast metrics, chronological splitting, and the ablation sweep
//! harness.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::ops::Range;

use crate::math::FloatExt;
use crate::panel::AppliancePanel;
use crate::pipeline::{run_pipeline, TrainConfig};
use crate::{Error, Result};

/// Targets with magnitude below this (kW) are excluded from MAPE and
/// counted separately: households do have zero-load hours.
pub const MAPE_ZERO_CUTOFF_KW: f64 = 1e-6;

/// Accuracy of one prediction set.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    /// Mean absolute error, kW.
    pub mae: f64,
    /// Mean absolute percentage error as a fraction (0.145 = 14.5%).
    pub mape: f64,
    pub n_evaluated: usize,
    pub n_skipped_zero_target: usize,
}

/// Mean absolute error in the target's unit.
pub fn mae(pred: &[f64], actual: &[f64]) -> f64 {
    debug_assert_eq!(pred.len(), actual.len());
    if pred.is_empty() {
        return 0.0;
    }
    pred.iter()
        .zip(actual)
        .map(|(p, a)| (p - a).abs())
        .sum::<f64>()
        / pred.len() as f64
}

/// Mean absolute percentage error as a fraction, with near-zero targets
/// skipped; returns the error and the skip count.
pub fn mape(pred: &[f64], actual: &[f64]) -> (f64, usize) {
    debug_assert_eq!(pred.len(), actual.len());
    let mut sum = 0.0;
    let mut n = 0usize;
    let mut skipped = 0usize;
    for (p, a) in pred.iter().zip(actual) {
        if a.abs() < MAPE_ZERO_CUTOFF_KW {
            skipped += 1;
        } else {
            sum += (p - a).abs() / a.abs();
            n += 1;
        }
    }
    if n == 0 {
        (0.0, skipped)
    } else {
        (sum / n as f64, skipped)
    }
}

/// MAE and MAPE over one prediction set.
pub fn metric_report(pred: &[f64], actual: &[f64]) -> MetricReport {
    let (mape, skipped) = mape(pred, actual);
    MetricReport {
        mae: mae(pred, actual),
        mape,
        n_evaluated: pred.len() - skipped,
        n_skipped_zero_target: skipped,
    }
}

/// Contiguous, ordered, non-overlapping train/val/test ranges over `n`
/// chronological samples. No shuffling.
pub fn chronological_split(
    n: usize,
    fractions: &[f64; 3],
) -> Result<(Range<usize>, Range<usize>, Range<usize>)> {
    let sum: f64 = fractions.iter().sum();
    if fractions.iter().any(|&f| f < 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidConfig(String::from(
            "split fractions must be non-negative and sum to 1",
        )));
    }
    let n_train = ((n as f64) * fractions[0]).floor() as usize;
    let n_val = ((n as f64) * fractions[1]).floor() as usize;
    let train = 0..n_train;
    let val = n_train..(n_train + n_val).min(n);
    let test = val.end..n;
    Ok((train, val, test))
}

/// One ablation cell: which knobs this run uses.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationCell {
    pub tau: usize,
    pub epsilon: f64,
    pub filter_on: bool,
    pub seed: u64,
}

/// Result of one cell; failures carry the error text instead of aborting
/// the sweep.
#[derive(Debug, Clone)]
pub struct AblationRow {
    pub cell: AblationCell,
    pub outcome: core::result::Result<MetricReport, String>,
}

/// Grid to sweep: the cross product of window lengths, clustering radii,
/// and filtering on/off.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub taus: Vec<usize>,
    pub epsilons: Vec<f64>,
    pub filter: Vec<bool>,
}

impl SweepSpec {
    /// Cells in sweep order (taus outermost), with per-cell seeds
    /// `base_seed + cell_index` so reruns reproduce exactly.
    pub fn cells(&self, base_seed: u64) -> Vec<AblationCell> {
        let mut cells = Vec::new();
        let mut index = 0u64;
        for &tau in &self.taus {
            for &epsilon in &self.epsilons {
                for &filter_on in &self.filter {
                    cells.push(AblationCell {
                        tau,
                        epsilon,
                        filter_on,
                        seed: base_seed + index,
                    });
                    index += 1;
                }
            }
        }
        cells
    }
}

/// Applies one cell's knobs to a base config.
pub fn cell_config(base: &TrainConfig, cell: &AblationCell) -> TrainConfig {
    let mut config = base.clone();
    config.tau = cell.tau;
    config.epsilon = cell.epsilon;
    config.filter_enabled = cell.filter_on;
    config.seed = cell.seed;
    config
}

/// Trains and evaluates one cell.
pub fn run_cell(panel: &AppliancePanel, base: &TrainConfig, cell: &AblationCell) -> AblationRow {
    let config = cell_config(base, cell);
    let outcome = match run_pipeline(panel, &config) {
        Ok(run) => Ok(run.test_report),
        Err(e) => Err(e.to_string()),
    };
    AblationRow {
        cell: cell.clone(),
        outcome,
    }
}

/// Runs the whole sweep sequentially. Cells are independent; callers that
/// want parallelism can distribute [`SweepSpec::cells`] over workers and
/// reassemble rows in cell order.
pub fn run_ablation(
    panel: &AppliancePanel,
    base: &TrainConfig,
    sweep: &SweepSpec,
) -> Vec<AblationRow> {
    sweep
        .cells(base.seed)
        .iter()
        .map(|cell| run_cell(panel, base, cell))
        .collect()
}
