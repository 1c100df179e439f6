//! End-to-end forecasting pipeline: appliance selection, grouping, dataset
//! preparation, two-stage training, and next-hour prediction.
//!
//! Stage one pretrains each group forecaster on its group's next-step summed
//! load and the total-load forecaster on wavelet-band features, all
//! independently. Stage two freshly initializes the fusion head and trains
//! it on the concatenated head outputs while fine-tuning the pretrained
//! heads at a tenth of the fusion learning rate.
//!
//! Dataset features are stored raw (kW); standardization statistics come
//! from the training split only and are applied on the fly, so stored
//! features are pure functions of samples strictly before their target.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::dwt::{causal_band_window, WaveletFamily, LEVELS};
use crate::eval::{chronological_split, metric_report, MetricReport};
use crate::filtering::{contribution_rank, filter_critical, ContributionTable, FilterResult};
use crate::grouping::{
    cluster_appliances, correlation_distance_matrix, usage_vector, GroupingResult,
};
use crate::math::population_std;
use crate::neural::{AdamConfig, AdamState, FcParams, GateActivation, LstmFcGrads, LstmFcNet};
use crate::panel::AppliancePanel;
use crate::rng::Rng;
use crate::series::{context_features, usable_positions, CONTEXT_DIM};
use crate::{Error, Result};

// Derivation labels for per-component RNG streams.
const LBL_GROUP_INIT: u64 = 1_000;
const LBL_AGG_INIT: u64 = 2_000;
const LBL_CO_INIT: u64 = 3_000;
const LBL_GROUP_TRAIN: u64 = 10_000;
const LBL_AGG_TRAIN: u64 = 20_000;
const LBL_STAGE2: u64 = 30_000;
const LBL_CO_REINIT: u64 = 40_000;

/// All tunables of one pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// History window length in samples.
    pub tau: usize,
    /// Contribution trade-off between volatility and periodicity.
    pub alpha: f64,
    /// Decomposition stop threshold relative to std(total load).
    pub sigma_rel: f64,
    /// Clustering neighborhood radius.
    pub epsilon: f64,
    /// Maximum usage-correlation lag in samples.
    pub delta: usize,
    /// Samples per day (24 for hourly data).
    pub day_len: usize,
    pub lr_stage1: f64,
    pub lr_stage2: f64,
    pub epochs_stage1: usize,
    pub epochs_stage2: usize,
    pub batch_size: usize,
    /// Early-stopping patience in epochs.
    pub patience: usize,
    pub seed: u64,
    pub gate: GateActivation,
    pub wavelet: WaveletFamily,
    /// Causal decomposition buffer length in samples.
    pub buffer_len: usize,
    /// Chronological train/val/test fractions; must sum to 1.
    pub split: [f64; 3],
    pub hidden_dim: usize,
    /// FC hidden widths between the LSTM feature and the scalar output.
    pub fc_hidden: Vec<usize>,
    /// When false, every monitored appliance counts as critical.
    pub filter_enabled: bool,
    /// When false, the total-load forecaster sees the raw window instead of
    /// wavelet bands.
    pub dwt_enabled: bool,
    /// Freeze pretrained heads during stage two instead of fine-tuning.
    pub freeze_subnets_stage2: bool,
    /// Shift applied to timestamps before computing calendar context.
    pub tz_offset_secs: i64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            tau: 12,
            alpha: 0.5,
            sigma_rel: 0.15,
            epsilon: 0.92,
            delta: 6,
            day_len: 24,
            lr_stage1: 1e-3,
            lr_stage2: 1e-3,
            epochs_stage1: 100,
            epochs_stage2: 50,
            batch_size: 64,
            patience: 10,
            seed: 42,
            gate: GateActivation::Sigmoid,
            wavelet: WaveletFamily::Haar,
            buffer_len: 128,
            split: [0.70, 0.15, 0.15],
            hidden_dim: 64,
            fc_hidden: vec![64, 32],
            filter_enabled: true,
            dwt_enabled: true,
            freeze_subnets_stage2: false,
            tz_offset_secs: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        fn bad(msg: &str) -> Error {
            Error::InvalidConfig(String::from(msg))
        }
        if self.tau == 0 {
            return Err(bad("tau must be positive"));
        }
        if self.alpha.is_nan() || self.alpha <= 0.0 || self.alpha >= 1.0 {
            return Err(bad("alpha must be in (0, 1)"));
        }
        if self.sigma_rel.is_nan() || self.sigma_rel <= 0.0 {
            return Err(bad("sigma_rel must be positive"));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 || self.epsilon > 1.0 {
            return Err(bad("epsilon must be in (0, 1]"));
        }
        if self.day_len == 0 {
            return Err(bad("day_len must be positive"));
        }
        if !(self.lr_stage1.is_finite() && self.lr_stage1 > 0.0)
            || !(self.lr_stage2.is_finite() && self.lr_stage2 > 0.0)
        {
            return Err(bad("learning rates must be positive"));
        }
        if self.batch_size == 0 {
            return Err(bad("batch_size must be positive"));
        }
        if self.patience == 0 {
            return Err(bad("patience must be positive"));
        }
        if self.hidden_dim == 0 {
            return Err(bad("hidden_dim must be positive"));
        }
        let sum: f64 = self.split.iter().sum();
        if self.split.iter().any(|&f| f < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(bad("split fractions must be non-negative and sum to 1"));
        }
        if self.split[0] <= 0.0 {
            return Err(bad("training fraction must be positive"));
        }
        if self.dwt_enabled && self.buffer_len < (1 << LEVELS).max(self.tau) {
            return Err(bad("buffer_len must cover both 2^levels and tau"));
        }
        Ok(())
    }

    /// Valid history a sample's target position must have behind it.
    pub fn required_history(&self) -> usize {
        if self.dwt_enabled {
            self.buffer_len.max(self.tau)
        } else {
            self.tau
        }
    }

    /// Total-load feature channels per window row.
    pub fn band_count(&self) -> usize {
        if self.dwt_enabled {
            LEVELS + 1
        } else {
            1
        }
    }
}

/// Per-channel standardization statistics, computed on the training split.
///
/// A near-zero spread falls back to 1.0 so constant channels pass through
/// centered but unscaled.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub group_input_mean: Vec<Vec<f64>>,
    pub group_input_std: Vec<Vec<f64>>,
    pub group_target_mean: Vec<f64>,
    pub group_target_std: Vec<f64>,
    pub agg_input_mean: Vec<f64>,
    pub agg_input_std: Vec<f64>,
    pub total_mean: f64,
    pub total_std: f64,
    pub ctx_mean: Vec<f64>,
    pub ctx_std: Vec<f64>,
}

impl NormStats {
    fn neutral(group_widths: &[usize], bands: usize, ctx_dim: usize) -> Self {
        NormStats {
            group_input_mean: group_widths.iter().map(|&w| vec![0.0; w]).collect(),
            group_input_std: group_widths.iter().map(|&w| vec![1.0; w]).collect(),
            group_target_mean: vec![0.0; group_widths.len()],
            group_target_std: vec![1.0; group_widths.len()],
            agg_input_mean: vec![0.0; bands],
            agg_input_std: vec![1.0; bands],
            total_mean: 0.0,
            total_std: 1.0,
            ctx_mean: vec![0.0; ctx_dim],
            ctx_std: vec![1.0; ctx_dim],
        }
    }
}

fn guard_std(s: f64) -> f64 {
    if s > 1e-9 {
        s
    } else {
        1.0
    }
}

/// Mean/std per channel over row-major `n x (rows_per_sample x channels)` data.
fn channel_stats(
    data: &[f64],
    channels: usize,
    sample_range: Range<usize>,
    width: usize,
) -> (Vec<f64>, Vec<f64>) {
    let mut mean = vec![0.0f64; channels];
    let mut count = 0usize;
    for s in sample_range.clone() {
        let row = &data[s * width..(s + 1) * width];
        for (i, &v) in row.iter().enumerate() {
            mean[i % channels] += v;
        }
        count += width / channels;
    }
    let count = count.max(1) as f64;
    for m in &mut mean {
        *m /= count;
    }
    let mut var = vec![0.0f64; channels];
    for s in sample_range {
        let row = &data[s * width..(s + 1) * width];
        for (i, &v) in row.iter().enumerate() {
            let d = v - mean[i % channels];
            var[i % channels] += d * d;
        }
    }
    let std = var.iter().map(|&v| guard_std((v / count).sqrt())).collect();
    (mean, std)
}

fn scalar_stats(values: &[f64]) -> (f64, f64) {
    let n = values.len().max(1) as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, guard_std(var.sqrt()))
}

use crate::math::FloatExt;

/// Raw (unstandardized) supervised data for every head, on one shared list
/// of target positions with a chronological split.
#[derive(Debug, Clone)]
pub struct PreparedData {
    /// Target position of each sample in the source panel.
    pub positions: Vec<usize>,
    /// Per group: row-major `n x (tau * width_i)` appliance windows, kW.
    pub group_inputs: Vec<Vec<f64>>,
    /// Per group: next-step summed group load, kW.
    pub group_targets: Vec<Vec<f64>>,
    /// Row-major `n x (tau * bands)` total-load features.
    pub agg_inputs: Vec<f64>,
    /// Next-step total load, kW.
    pub total_targets: Vec<f64>,
    /// Row-major `n x ctx_dim` calendar context.
    pub context: Vec<f64>,
    /// Total load one step before the target (persistence baseline).
    pub previous_total: Vec<f64>,
    pub tau: usize,
    pub bands: usize,
    pub ctx_dim: usize,
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

impl PreparedData {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn group_width(&self, g: usize) -> usize {
        self.group_inputs[g].len() / self.len().max(1) / self.tau
    }
}

/// The trained forecaster: per-group heads, the total-load head, and the
/// fusion stack, plus everything needed to reproduce its inputs.
#[derive(Debug, Clone)]
pub struct ForecastModel {
    pub config: TrainConfig,
    /// Critical appliance ids in contribution order.
    pub critical_ids: Vec<u32>,
    pub grouping: GroupingResult,
    pub group_nets: Vec<LstmFcNet>,
    pub agg_net: LstmFcNet,
    pub co_predictor: FcParams,
    pub norm: NormStats,
}

/// Per-epoch losses of one training run (standardized target space).
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub train_loss: f64,
    pub val_loss: f64,
}

/// Loss history of every trained component.
#[derive(Debug, Clone, Default)]
pub struct TrainingHistory {
    pub group: Vec<Vec<EpochRecord>>,
    pub agg: Vec<EpochRecord>,
    pub stage2: Vec<EpochRecord>,
}

impl ForecastModel {
    /// Builds untrained nets for a fixed critical set and grouping; the
    /// RNG stream is derived from `config.seed`, so identical configs give
    /// bitwise-identical initial parameters.
    pub fn assemble(
        config: TrainConfig,
        critical_ids: Vec<u32>,
        grouping: GroupingResult,
    ) -> Result<ForecastModel> {
        config.validate()?;
        let root = Rng::new(config.seed);
        let bands = config.band_count();

        let group_nets: Vec<LstmFcNet> = grouping
            .groups
            .iter()
            .enumerate()
            .map(|(i, members)| {
                let mut rng = root.derive(LBL_GROUP_INIT + i as u64);
                LstmFcNet::new(
                    members.len(),
                    config.hidden_dim,
                    &config.fc_hidden,
                    CONTEXT_DIM,
                    config.gate,
                    &mut rng,
                )
            })
            .collect();

        let mut agg_rng = root.derive(LBL_AGG_INIT);
        let agg_net = LstmFcNet::new(
            bands,
            config.hidden_dim,
            &config.fc_hidden,
            CONTEXT_DIM,
            config.gate,
            &mut agg_rng,
        );

        let mut co_rng = root.derive(LBL_CO_INIT);
        let co_predictor = new_co_predictor(grouping.group_count(), &config, &mut co_rng);

        let group_widths: Vec<usize> = grouping.groups.iter().map(|g| g.len()).collect();
        let norm = NormStats::neutral(&group_widths, bands, CONTEXT_DIM);

        Ok(ForecastModel {
            config,
            critical_ids,
            grouping,
            group_nets,
            agg_net,
            co_predictor,
            norm,
        })
    }

    pub fn group_count(&self) -> usize {
        self.group_nets.len()
    }

    /// Named parameter and statistics blocks in a stable order.
    pub fn state_blocks(&self) -> Vec<(String, Vec<f64>)> {
        let mut out = Vec::new();
        for (i, net) in self.group_nets.iter().enumerate() {
            for (name, data) in net.blocks() {
                out.push((format!("group{i}.{name}"), data.to_vec()));
            }
        }
        for (name, data) in self.agg_net.blocks() {
            out.push((format!("agg.{name}"), data.to_vec()));
        }
        for (name, data) in self.co_predictor.blocks() {
            out.push((format!("co.{name}"), data.to_vec()));
        }
        for (i, (mean, std)) in self
            .norm
            .group_input_mean
            .iter()
            .zip(&self.norm.group_input_std)
            .enumerate()
        {
            out.push((format!("norm.group{i}.input_mean"), mean.clone()));
            out.push((format!("norm.group{i}.input_std"), std.clone()));
        }
        out.push((
            String::from("norm.group_target_mean"),
            self.norm.group_target_mean.clone(),
        ));
        out.push((
            String::from("norm.group_target_std"),
            self.norm.group_target_std.clone(),
        ));
        out.push((
            String::from("norm.agg.input_mean"),
            self.norm.agg_input_mean.clone(),
        ));
        out.push((
            String::from("norm.agg.input_std"),
            self.norm.agg_input_std.clone(),
        ));
        out.push((
            String::from("norm.total"),
            vec![self.norm.total_mean, self.norm.total_std],
        ));
        out.push((String::from("norm.ctx.mean"), self.norm.ctx_mean.clone()));
        out.push((String::from("norm.ctx.std"), self.norm.ctx_std.clone()));
        out
    }

    /// Restores one named block; shapes must match the assembled model.
    pub fn load_state_block(&mut self, name: &str, data: &[f64]) -> Result<()> {
        fn fill(dst: &mut [f64], src: &[f64], name: &str) -> Result<()> {
            if dst.len() != src.len() {
                return Err(Error::UnknownParameter(format!(
                    "{name}: length {} != {}",
                    src.len(),
                    dst.len()
                )));
            }
            dst.copy_from_slice(src);
            Ok(())
        }

        if let Some(rest) = name.strip_prefix("group") {
            if let Some(dot) = rest.find('.') {
                if let Ok(i) = rest[..dot].parse::<usize>() {
                    if let Some(net) = self.group_nets.get_mut(i) {
                        let sub = &rest[dot + 1..];
                        for (bname, block) in net.blocks_mut() {
                            if bname == sub {
                                return fill(block, data, name);
                            }
                        }
                    }
                }
            }
        }
        if let Some(sub) = name.strip_prefix("agg.") {
            for (bname, block) in self.agg_net.blocks_mut() {
                if bname == sub {
                    return fill(block, data, name);
                }
            }
        }
        if let Some(sub) = name.strip_prefix("co.") {
            for (bname, block) in self.co_predictor.blocks_mut() {
                if bname == sub {
                    return fill(block, data, name);
                }
            }
        }
        if let Some(rest) = name.strip_prefix("norm.") {
            if let Some(rest) = rest.strip_prefix("group") {
                if let Some(dot) = rest.find('.') {
                    if let Ok(i) = rest[..dot].parse::<usize>() {
                        match &rest[dot + 1..] {
                            "input_mean" => {
                                return fill(&mut self.norm.group_input_mean[i], data, name)
                            }
                            "input_std" => {
                                return fill(&mut self.norm.group_input_std[i], data, name)
                            }
                            _ => {}
                        }
                    }
                }
                if rest == "_target_mean" {
                    return fill(&mut self.norm.group_target_mean, data, name);
                }
                if rest == "_target_std" {
                    return fill(&mut self.norm.group_target_std, data, name);
                }
            }
            match rest {
                "agg.input_mean" => return fill(&mut self.norm.agg_input_mean, data, name),
                "agg.input_std" => return fill(&mut self.norm.agg_input_std, data, name),
                "ctx.mean" => return fill(&mut self.norm.ctx_mean, data, name),
                "ctx.std" => return fill(&mut self.norm.ctx_std, data, name),
                "total" => {
                    if data.len() != 2 {
                        return Err(Error::UnknownParameter(name.to_string()));
                    }
                    self.norm.total_mean = data[0];
                    self.norm.total_std = data[1];
                    return Ok(());
                }
                _ => {}
            }
        }
        Err(Error::UnknownParameter(name.to_string()))
    }
}

fn new_co_predictor(groups: usize, config: &TrainConfig, rng: &mut Rng) -> FcParams {
    let mut sizes = Vec::with_capacity(config.fc_hidden.len() + 2);
    sizes.push(groups + 1);
    sizes.extend_from_slice(&config.fc_hidden);
    sizes.push(1);
    FcParams::new(&sizes, rng)
}

/// Outcome of the selection and grouping stages.
#[derive(Debug, Clone)]
pub struct SelectionOutcome {
    pub table: ContributionTable,
    /// Decomposition trace (computed even when filtering is disabled, for
    /// reporting).
    pub filter: FilterResult,
    /// Appliance ids actually forecast, in contribution order.
    pub critical_ids: Vec<u32>,
    pub distances: crate::grouping::DistanceMatrix,
    pub grouping: GroupingResult,
}

/// Runs filtering and grouping on a panel per `config`.
pub fn select_and_group(panel: &AppliancePanel, config: &TrainConfig) -> Result<SelectionOutcome> {
    let table = contribution_rank(panel, config.alpha, config.day_len)?;
    let total_std = population_std(&panel.total_load().valid_values());
    let sigma = config.sigma_rel * total_std;
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(Error::InvalidConfig(String::from(
            "total load has zero spread; nothing to forecast",
        )));
    }
    let filter = filter_critical(panel, &table, sigma)?;

    let critical_ids: Vec<u32> = if config.filter_enabled {
        filter.critical_ids.clone()
    } else {
        table.ranked_ids()
    };
    if critical_ids.is_empty() {
        return Err(Error::NoCriticalAppliances);
    }

    let mut usage = Vec::with_capacity(critical_ids.len());
    for &id in &critical_ids {
        let (meta, series) = panel
            .appliance_by_id(id)
            .ok_or_else(|| Error::UnknownParameter(format!("appliance id {id}")))?;
        usage.push(usage_vector(series, &meta.name)?);
    }
    let distances = correlation_distance_matrix(&usage, config.delta)?;
    let grouping = cluster_appliances(&distances, &critical_ids, config.epsilon)?;
    Ok(SelectionOutcome {
        table,
        filter,
        critical_ids,
        distances,
        grouping,
    })
}

/// Builds the untrained model and its datasets from a panel.
pub fn build_model(
    panel: &AppliancePanel,
    config: &TrainConfig,
) -> Result<(ForecastModel, PreparedData)> {
    config.validate()?;
    let selection = select_and_group(panel, config)?;
    let mut model =
        ForecastModel::assemble(config.clone(), selection.critical_ids, selection.grouping)?;
    let data = prepare_datasets(panel, &model)?;
    fit_norm_stats(&mut model, &data);
    Ok((model, data))
}

/// Extracts raw windows for every head over the shared usable positions.
pub fn prepare_datasets(panel: &AppliancePanel, model: &ForecastModel) -> Result<PreparedData> {
    let config = &model.config;
    let tau = config.tau;
    let bands = config.band_count();

    let mut channels: Vec<&crate::series::LoadSeries> = vec![panel.total_load()];
    let mut group_series: Vec<Vec<&crate::series::LoadSeries>> = Vec::new();
    for members in &model.grouping.groups {
        let mut list = Vec::with_capacity(members.len());
        for &id in members {
            let (_, s) = panel
                .appliance_by_id(id)
                .ok_or_else(|| Error::UnknownParameter(format!("appliance id {id}")))?;
            list.push(s);
            channels.push(s);
        }
        group_series.push(list);
    }

    let min_history = config.required_history();
    if panel.len() <= min_history {
        return Err(Error::InsufficientHistory {
            have: panel.len(),
            need: min_history + 1,
        });
    }
    let positions = usable_positions(&channels, tau, min_history);
    if positions.is_empty() {
        return Err(Error::InsufficientHistory {
            have: 0,
            need: min_history + 1,
        });
    }

    let n = positions.len();
    let total = panel.total_load();
    let index = *panel.index();

    let mut group_inputs: Vec<Vec<f64>> = group_series
        .iter()
        .map(|list| Vec::with_capacity(n * tau * list.len()))
        .collect();
    let mut group_targets: Vec<Vec<f64>> =
        group_series.iter().map(|_| Vec::with_capacity(n)).collect();
    let mut agg_inputs = Vec::with_capacity(n * tau * bands);
    let mut total_targets = Vec::with_capacity(n);
    let mut context = Vec::with_capacity(n * CONTEXT_DIM);
    let mut previous_total = Vec::with_capacity(n);

    for &t in &positions {
        for (g, list) in group_series.iter().enumerate() {
            for r in 0..tau {
                for s in list.iter() {
                    group_inputs[g].push(s.values()[t - tau + r]);
                }
            }
            group_targets[g].push(list.iter().map(|s| s.values()[t]).sum());
        }

        if config.dwt_enabled {
            let rows = causal_band_window(total, t, tau, config.buffer_len, config.wavelet)?;
            agg_inputs.extend_from_slice(&rows);
        } else {
            for r in 0..tau {
                agg_inputs.push(total.values()[t - tau + r]);
            }
        }

        total_targets.push(total.values()[t]);
        previous_total.push(total.values()[t - 1]);
        context.extend_from_slice(&context_features(
            index.timestamp(t) + config.tz_offset_secs,
        ));
    }

    let (train, val, test) = chronological_split(n, &config.split)?;
    Ok(PreparedData {
        positions,
        group_inputs,
        group_targets,
        agg_inputs,
        total_targets,
        context,
        previous_total,
        tau,
        bands,
        ctx_dim: CONTEXT_DIM,
        train,
        val,
        test,
    })
}

/// Computes standardization statistics on the training split.
pub fn fit_norm_stats(model: &mut ForecastModel, data: &PreparedData) {
    let tr = data.train.clone();
    for g in 0..model.group_count() {
        let width = data.tau * data.group_width(g);
        let (mean, std) = channel_stats(
            &data.group_inputs[g],
            data.group_width(g),
            tr.clone(),
            width,
        );
        model.norm.group_input_mean[g] = mean;
        model.norm.group_input_std[g] = std;
        let (tm, ts) = scalar_stats(&data.group_targets[g][tr.clone()]);
        model.norm.group_target_mean[g] = tm;
        model.norm.group_target_std[g] = ts;
    }
    let agg_width = data.tau * data.bands;
    let (am, astd) = channel_stats(&data.agg_inputs, data.bands, tr.clone(), agg_width);
    model.norm.agg_input_mean = am;
    model.norm.agg_input_std = astd;
    let (tm, ts) = scalar_stats(&data.total_targets[tr.clone()]);
    model.norm.total_mean = tm;
    model.norm.total_std = ts;
    let (cm, cs) = channel_stats(&data.context, data.ctx_dim, tr, data.ctx_dim);
    model.norm.ctx_mean = cm;
    model.norm.ctx_std = cs;
}

/// One head's view of the prepared data plus its standardization.
struct HeadData<'a> {
    inputs: &'a [f64],
    width: usize,
    channels: usize,
    input_mean: &'a [f64],
    input_std: &'a [f64],
    targets: &'a [f64],
    target_mean: f64,
    target_std: f64,
    ctx: &'a [f64],
    ctx_dim: usize,
    ctx_mean: &'a [f64],
    ctx_std: &'a [f64],
}

impl<'a> HeadData<'a> {
    fn standardized_input(&self, s: usize, buf: &mut Vec<f64>) {
        buf.clear();
        let row = &self.inputs[s * self.width..(s + 1) * self.width];
        for (i, &v) in row.iter().enumerate() {
            let ch = i % self.channels;
            buf.push((v - self.input_mean[ch]) / self.input_std[ch]);
        }
    }

    fn standardized_ctx(&self, s: usize, buf: &mut Vec<f64>) {
        buf.clear();
        let row = &self.ctx[s * self.ctx_dim..(s + 1) * self.ctx_dim];
        for (i, &v) in row.iter().enumerate() {
            buf.push((v - self.ctx_mean[i]) / self.ctx_std[i]);
        }
    }

    fn standardized_target(&self, s: usize) -> f64 {
        (self.targets[s] - self.target_mean) / self.target_std
    }
}

fn group_head_data<'a>(model: &'a ForecastModel, data: &'a PreparedData, g: usize) -> HeadData<'a> {
    HeadData {
        inputs: &data.group_inputs[g],
        width: data.tau * data.group_width(g),
        channels: data.group_width(g),
        input_mean: &model.norm.group_input_mean[g],
        input_std: &model.norm.group_input_std[g],
        targets: &data.group_targets[g],
        target_mean: model.norm.group_target_mean[g],
        target_std: model.norm.group_target_std[g],
        ctx: &data.context,
        ctx_dim: data.ctx_dim,
        ctx_mean: &model.norm.ctx_mean,
        ctx_std: &model.norm.ctx_std,
    }
}

fn agg_head_data<'a>(model: &'a ForecastModel, data: &'a PreparedData) -> HeadData<'a> {
    HeadData {
        inputs: &data.agg_inputs,
        width: data.tau * data.bands,
        channels: data.bands,
        input_mean: &model.norm.agg_input_mean,
        input_std: &model.norm.agg_input_std,
        targets: &data.total_targets,
        target_mean: model.norm.total_mean,
        target_std: model.norm.total_std,
        ctx: &data.context,
        ctx_dim: data.ctx_dim,
        ctx_mean: &model.norm.ctx_mean,
        ctx_std: &model.norm.ctx_std,
    }
}

fn head_val_loss(net: &LstmFcNet, head: &HeadData<'_>, range: Range<usize>) -> Result<f64> {
    if range.is_empty() {
        return Ok(f64::NAN);
    }
    let mut input = Vec::new();
    let mut ctx = Vec::new();
    let mut sum = 0.0;
    for s in range.clone() {
        head.standardized_input(s, &mut input);
        head.standardized_ctx(s, &mut ctx);
        let (pred, _) = net.forward(&input, &ctx)?;
        let d = pred - head.standardized_target(s);
        sum += d * d;
    }
    Ok(sum / range.len() as f64)
}

/// Trains one head with Adam, mini-batches, and best-weights early stopping.
#[allow(clippy::too_many_arguments)]
fn train_head(
    net: &mut LstmFcNet,
    head: &HeadData<'_>,
    train: Range<usize>,
    val: Range<usize>,
    lr: f64,
    epochs: usize,
    batch_size: usize,
    patience: usize,
    rng: &mut Rng,
    stage: &'static str,
) -> Result<Vec<EpochRecord>> {
    let mut adam = AdamState::new(net.param_count(), AdamConfig::with_lr(lr));
    let mut order: Vec<usize> = train.clone().collect();
    let mut history = Vec::with_capacity(epochs);

    let mut best_net = net.clone();
    let mut best_val = f64::INFINITY;
    let mut since_best = 0usize;
    let has_val = !val.is_empty();

    let mut input = Vec::new();
    let mut ctx = Vec::new();

    for epoch in 0..epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(batch_size) {
            let scale = 1.0 / batch.len() as f64;
            let mut grads = net.zero_grads();
            for &s in batch {
                head.standardized_input(s, &mut input);
                head.standardized_ctx(s, &mut ctx);
                let (pred, cache) = net.forward(&input, &ctx)?;
                let d = pred - head.standardized_target(s);
                epoch_loss += d * d;
                net.backward_into(&cache, 2.0 * d * scale, &mut grads);
            }
            let g_blocks = net.grad_blocks(&grads);
            let g_owned: Vec<(&'static str, Vec<f64>)> =
                g_blocks.iter().map(|(n, g)| (*n, g.to_vec())).collect();
            let g_refs: Vec<(&'static str, &[f64])> =
                g_owned.iter().map(|(n, g)| (*n, g.as_slice())).collect();
            adam.update(&mut net.blocks_mut(), &g_refs);
        }
        let train_loss = epoch_loss / order.len().max(1) as f64;
        if !train_loss.is_finite() {
            return Err(Error::NonFiniteLoss { stage, epoch });
        }
        let val_loss = head_val_loss(net, head, val.clone())?;
        history.push(EpochRecord {
            train_loss,
            val_loss,
        });

        if has_val {
            if val_loss < best_val {
                best_val = val_loss;
                best_net = net.clone();
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= patience {
                    break;
                }
            }
        }
    }

    if has_val && epochs > 0 {
        *net = best_net;
    }
    Ok(history)
}

/// Stage one: pretrains every group head and the total-load head
/// independently. No gradients cross component boundaries.
pub fn pretrain_components(
    model: &mut ForecastModel,
    data: &PreparedData,
    history: &mut TrainingHistory,
) -> Result<()> {
    let config = model.config.clone();
    let root = Rng::new(config.seed);

    history.group.clear();
    for g in 0..model.group_count() {
        let head = group_head_data(model, data, g);
        let mut net = model.group_nets[g].clone();
        let mut rng = root.derive(LBL_GROUP_TRAIN + g as u64);
        let h = train_head(
            &mut net,
            &head,
            data.train.clone(),
            data.val.clone(),
            config.lr_stage1,
            config.epochs_stage1,
            config.batch_size,
            config.patience,
            &mut rng,
            "group pretraining",
        )?;
        model.group_nets[g] = net;
        history.group.push(h);
    }

    let head = agg_head_data(model, data);
    let mut net = model.agg_net.clone();
    let mut rng = root.derive(LBL_AGG_TRAIN);
    history.agg = train_head(
        &mut net,
        &head,
        data.train.clone(),
        data.val.clone(),
        config.lr_stage1,
        config.epochs_stage1,
        config.batch_size,
        config.patience,
        &mut rng,
        "total-load pretraining",
    )?;
    model.agg_net = net;
    Ok(())
}

struct Stage2Forward {
    co_out: f64,
    agg_cache: crate::neural::LstmFcCache,
    group_caches: Vec<crate::neural::LstmFcCache>,
    co_cache: crate::neural::FcCache,
}

fn stage2_forward(model: &ForecastModel, data: &PreparedData, s: usize) -> Result<Stage2Forward> {
    let mut input = Vec::new();
    let mut ctx = Vec::new();

    let agg_head = agg_head_data(model, data);
    agg_head.standardized_input(s, &mut input);
    agg_head.standardized_ctx(s, &mut ctx);
    let (agg_pred, agg_cache) = model.agg_net.forward(&input, &ctx)?;

    let mut group_preds = Vec::with_capacity(model.group_count());
    let mut group_caches = Vec::with_capacity(model.group_count());
    for g in 0..model.group_count() {
        let head = group_head_data(model, data, g);
        head.standardized_input(s, &mut input);
        head.standardized_ctx(s, &mut ctx);
        let (pred, cache) = model.group_nets[g].forward(&input, &ctx)?;
        group_preds.push(pred);
        group_caches.push(cache);
    }

    let mut co_in = Vec::with_capacity(1 + group_preds.len());
    co_in.push(agg_pred);
    co_in.extend_from_slice(&group_preds);
    let co_cache = model.co_predictor.forward(&co_in)?;
    let co_out = co_cache.output()[0];

    Ok(Stage2Forward {
        co_out,
        agg_cache,
        group_caches,
        co_cache,
    })
}

fn stage2_val_loss(model: &ForecastModel, data: &PreparedData, range: Range<usize>) -> Result<f64> {
    if range.is_empty() {
        return Ok(f64::NAN);
    }
    let mut sum = 0.0;
    for s in range.clone() {
        let fwd = stage2_forward(model, data, s)?;
        let target = (data.total_targets[s] - model.norm.total_mean) / model.norm.total_std;
        let d = fwd.co_out - target;
        sum += d * d;
    }
    Ok(sum / range.len() as f64)
}

/// Stage two: freshly initializes the fusion head, then trains it on the
/// concatenated `[total-head, group-heads...]` outputs against total-load
/// error while fine-tuning the pretrained heads at a tenth of the rate
/// (or freezing them when configured).
pub fn finetune_collaborative(
    model: &mut ForecastModel,
    data: &PreparedData,
    history: &mut TrainingHistory,
) -> Result<()> {
    let config = model.config.clone();
    let root = Rng::new(config.seed);

    let mut co_rng = root.derive(LBL_CO_REINIT);
    model.co_predictor = new_co_predictor(model.group_count(), &config, &mut co_rng);

    let mut adam_co = AdamState::new(
        model.co_predictor.param_count(),
        AdamConfig::with_lr(config.lr_stage2),
    );
    let subnet_lr = 0.1 * config.lr_stage2;
    let mut adam_agg = AdamState::new(model.agg_net.param_count(), AdamConfig::with_lr(subnet_lr));
    let mut adam_groups: Vec<AdamState> = model
        .group_nets
        .iter()
        .map(|n| AdamState::new(n.param_count(), AdamConfig::with_lr(subnet_lr)))
        .collect();

    let mut rng = root.derive(LBL_STAGE2);
    let mut order: Vec<usize> = data.train.clone().collect();
    let has_val = !data.val.is_empty();
    let mut best: Option<(f64, Vec<LstmFcNet>, LstmFcNet, FcParams)> = None;
    let mut since_best = 0usize;

    history.stage2.clear();
    for epoch in 0..config.epochs_stage2 {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;

        for batch in order.chunks(config.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            let mut co_grads = model.co_predictor.zero_grads();
            let mut agg_grads = model.agg_net.zero_grads();
            let mut group_grads: Vec<LstmFcGrads> =
                model.group_nets.iter().map(|n| n.zero_grads()).collect();

            for &s in batch {
                let fwd = stage2_forward(model, data, s)?;
                let target = (data.total_targets[s] - model.norm.total_mean) / model.norm.total_std;
                let d = fwd.co_out - target;
                epoch_loss += d * d;

                let d_co_in = model.co_predictor.backward_into(
                    &fwd.co_cache,
                    &[2.0 * d * scale],
                    &mut co_grads,
                );
                if !config.freeze_subnets_stage2 {
                    model
                        .agg_net
                        .backward_into(&fwd.agg_cache, d_co_in[0], &mut agg_grads);
                    for g in 0..model.group_count() {
                        model.group_nets[g].backward_into(
                            &fwd.group_caches[g],
                            d_co_in[1 + g],
                            &mut group_grads[g],
                        );
                    }
                }
            }

            apply_fc_update(&mut adam_co, &mut model.co_predictor, &co_grads);
            if !config.freeze_subnets_stage2 {
                apply_net_update(&mut adam_agg, &mut model.agg_net, &agg_grads);
                for g in 0..model.group_count() {
                    apply_net_update(
                        &mut adam_groups[g],
                        &mut model.group_nets[g],
                        &group_grads[g],
                    );
                }
            }
        }

        let train_loss = epoch_loss / order.len().max(1) as f64;
        if !train_loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                stage: "collaborative fine-tuning",
                epoch,
            });
        }
        let val_loss = stage2_val_loss(model, data, data.val.clone())?;
        history.stage2.push(EpochRecord {
            train_loss,
            val_loss,
        });

        if has_val {
            let improved = match &best {
                Some((b, _, _, _)) => val_loss < *b,
                None => true,
            };
            if improved {
                best = Some((
                    val_loss,
                    model.group_nets.clone(),
                    model.agg_net.clone(),
                    model.co_predictor.clone(),
                ));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= config.patience {
                    break;
                }
            }
        }
    }

    if let Some((_, groups, agg, co)) = best {
        model.group_nets = groups;
        model.agg_net = agg;
        model.co_predictor = co;
    }
    Ok(())
}

fn apply_net_update(adam: &mut AdamState, net: &mut LstmFcNet, grads: &LstmFcGrads) {
    let g_owned: Vec<(&'static str, Vec<f64>)> = net
        .grad_blocks(grads)
        .iter()
        .map(|(n, g)| (*n, g.to_vec()))
        .collect();
    let g_refs: Vec<(&'static str, &[f64])> =
        g_owned.iter().map(|(n, g)| (*n, g.as_slice())).collect();
    adam.update(&mut net.blocks_mut(), &g_refs);
}

fn apply_fc_update(adam: &mut AdamState, fc: &mut FcParams, grads: &crate::neural::FcGrads) {
    let g_owned: Vec<(&'static str, Vec<f64>)> = grads
        .blocks()
        .iter()
        .map(|(n, g)| (*n, g.to_vec()))
        .collect();
    let g_refs: Vec<(&'static str, &[f64])> =
        g_owned.iter().map(|(n, g)| (*n, g.as_slice())).collect();
    adam.update(&mut fc.blocks_mut(), &g_refs);
}

/// Forecast in kW for one prepared sample, clamped non-negative.
pub fn predict_sample(model: &ForecastModel, data: &PreparedData, s: usize) -> Result<f64> {
    let fwd = stage2_forward(model, data, s)?;
    Ok((fwd.co_out * model.norm.total_std + model.norm.total_mean).max(0.0))
}

/// The total-load head alone (no fusion), in kW, clamped non-negative.
pub fn predict_sample_agg_only(
    model: &ForecastModel,
    data: &PreparedData,
    s: usize,
) -> Result<f64> {
    let mut input = Vec::new();
    let mut ctx = Vec::new();
    let head = agg_head_data(model, data);
    head.standardized_input(s, &mut input);
    head.standardized_ctx(s, &mut ctx);
    let (pred, _) = model.agg_net.forward(&input, &ctx)?;
    Ok((pred * model.norm.total_std + model.norm.total_mean).max(0.0))
}

/// Next-step forecast at panel position `t` (the slot being predicted).
///
/// Reads only samples strictly before `t`; `t` may equal the panel length
/// to forecast one step past the end.
pub fn predict_next(model: &ForecastModel, panel: &AppliancePanel, t: usize) -> Result<f64> {
    let config = &model.config;
    let tau = config.tau;
    let need = config.required_history();
    if t < need || t > panel.len() {
        return Err(Error::InsufficientHistory {
            have: t.min(panel.len()),
            need,
        });
    }

    let total = panel.total_load();
    if !total.range_valid(t - need, t) {
        return Err(Error::InsufficientHistory { have: 0, need });
    }

    let mut input = Vec::new();
    let mut ctx_raw = context_features(panel.index().timestamp(t) + config.tz_offset_secs);
    for (i, v) in ctx_raw.iter_mut().enumerate() {
        *v = (*v - model.norm.ctx_mean[i]) / model.norm.ctx_std[i];
    }

    // Total-load head.
    let agg_raw: Vec<f64> = if config.dwt_enabled {
        causal_band_window(total, t, tau, config.buffer_len, config.wavelet)?
    } else {
        total.values()[t - tau..t].to_vec()
    };
    input.clear();
    for (i, &v) in agg_raw.iter().enumerate() {
        let ch = i % model.norm.agg_input_mean.len();
        input.push((v - model.norm.agg_input_mean[ch]) / model.norm.agg_input_std[ch]);
    }
    let (agg_pred, _) = model.agg_net.forward(&input, &ctx_raw)?;

    // Group heads.
    let mut co_in = Vec::with_capacity(1 + model.group_count());
    co_in.push(agg_pred);
    for (g, members) in model.grouping.groups.iter().enumerate() {
        input.clear();
        let mut series = Vec::with_capacity(members.len());
        for &id in members {
            let (_, s) = panel
                .appliance_by_id(id)
                .ok_or_else(|| Error::UnknownParameter(format!("appliance id {id}")))?;
            if !s.range_valid(t - tau, t) {
                return Err(Error::InsufficientHistory { have: 0, need: tau });
            }
            series.push(s);
        }
        for r in 0..tau {
            for (ch, s) in series.iter().enumerate() {
                let v = s.values()[t - tau + r];
                input.push(
                    (v - model.norm.group_input_mean[g][ch]) / model.norm.group_input_std[g][ch],
                );
            }
        }
        let (pred, _) = model.group_nets[g].forward(&input, &ctx_raw)?;
        co_in.push(pred);
    }

    let co_out = self::co_forward(&model.co_predictor, &co_in)?;
    Ok((co_out * model.norm.total_std + model.norm.total_mean).max(0.0))
}

fn co_forward(co: &FcParams, input: &[f64]) -> Result<f64> {
    Ok(co.forward(input)?.output()[0])
}

/// Everything a full train-and-evaluate run produces.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub model: ForecastModel,
    pub history: TrainingHistory,
    /// Full collaborative model on the test split.
    pub test_report: MetricReport,
    /// Pretrained total-load head alone on the test split (stage-one
    /// snapshot, before fine-tuning can touch it).
    pub agg_only_report: MetricReport,
    /// Forecast = previous hour's load, on the test split.
    pub persistence_report: MetricReport,
    /// `(position, forecast kW, actual kW)` over the test split.
    pub test_predictions: Vec<(usize, f64, f64)>,
}

/// Builds, trains (both stages), and evaluates on the chronological test
/// split.
pub fn run_pipeline(panel: &AppliancePanel, config: &TrainConfig) -> Result<PipelineRun> {
    let (mut model, data) = build_model(panel, config)?;
    let mut history = TrainingHistory::default();
    pretrain_components(&mut model, &data, &mut history)?;

    let agg_only_report = {
        let preds: Vec<f64> = data
            .test
            .clone()
            .map(|s| predict_sample_agg_only(&model, &data, s))
            .collect::<Result<_>>()?;
        metric_report(&preds, &data.total_targets[data.test.clone()])
    };

    finetune_collaborative(&mut model, &data, &mut history)?;

    let mut preds = Vec::with_capacity(data.test.len());
    let mut test_predictions = Vec::with_capacity(data.test.len());
    for s in data.test.clone() {
        let p = predict_sample(&model, &data, s)?;
        preds.push(p);
        test_predictions.push((data.positions[s], p, data.total_targets[s]));
    }
    let test_report = metric_report(&preds, &data.total_targets[data.test.clone()]);
    let persistence_report = metric_report(
        &data.previous_total[data.test.clone()],
        &data.total_targets[data.test.clone()],
    );

    Ok(PipelineRun {
        model,
        history,
        test_report,
        agg_only_report,
        persistence_report,
        test_predictions,
    })
}
