//! JSON run configuration.
//!
//! One document drives every subcommand: a data source, an optional date
//! range, the output directory, training settings, and an optional sweep
//! grid. Unknown keys are rejected so typos fail loudly instead of
//! silently using defaults. Command-line flags override individual keys
//! after the file is parsed.

use std::path::{Path, PathBuf};

use loadcast_core::dwt::WaveletFamily;
use loadcast_core::eval::SweepSpec;
use loadcast_core::neural::GateActivation;
use loadcast_core::pipeline::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSource,
    /// Inclusive start of the analysis range (ISO-8601 or epoch seconds).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<String>,
    /// Exclusive end of the analysis range.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<String>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub train: TrainSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSettings>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSource {
    /// Canonical hourly panel CSV.
    Csv { path: PathBuf },
    /// UK-DALE-style house directory.
    Ukdale {
        dir: PathBuf,
        channels: Vec<u32>,
        #[serde(default = "default_aggregate_channel")]
        aggregate_channel: u32,
    },
    /// Built-in synthetic scenario.
    Preset {
        name: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        days: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
}

fn default_aggregate_channel() -> u32 {
    1
}

/// Training knobs; every field has the pipeline default.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSettings {
    pub tau: usize,
    pub alpha: f64,
    pub sigma_rel: f64,
    pub epsilon: f64,
    pub delta: usize,
    pub day_len: usize,
    pub lr_stage1: f64,
    pub lr_stage2: f64,
    pub epochs_stage1: usize,
    pub epochs_stage2: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub seed: u64,
    /// `sigmoid` or `relu`.
    pub gate: String,
    /// `haar` or `db4`.
    pub wavelet: String,
    pub buffer_len: usize,
    pub split: [f64; 3],
    pub hidden_dim: usize,
    pub fc_hidden: Vec<usize>,
    pub filter_enabled: bool,
    pub dwt_enabled: bool,
    pub freeze_subnets_stage2: bool,
    pub tz_offset_hours: i64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let c = TrainConfig::default();
        TrainSettings {
            tau: c.tau,
            alpha: c.alpha,
            sigma_rel: c.sigma_rel,
            epsilon: c.epsilon,
            delta: c.delta,
            day_len: c.day_len,
            lr_stage1: c.lr_stage1,
            lr_stage2: c.lr_stage2,
            epochs_stage1: c.epochs_stage1,
            epochs_stage2: c.epochs_stage2,
            batch_size: c.batch_size,
            patience: c.patience,
            seed: c.seed,
            gate: c.gate.name().to_string(),
            wavelet: c.wavelet.name().to_string(),
            buffer_len: c.buffer_len,
            split: c.split,
            hidden_dim: c.hidden_dim,
            fc_hidden: c.fc_hidden,
            filter_enabled: c.filter_enabled,
            dwt_enabled: c.dwt_enabled,
            freeze_subnets_stage2: c.freeze_subnets_stage2,
            tz_offset_hours: 0,
        }
    }
}

impl TrainSettings {
    pub fn to_train_config(&self) -> Result<TrainConfig, CliError> {
        let gate = GateActivation::parse(&self.gate)
            .ok_or_else(|| CliError::usage(format!("unknown gate activation '{}'", self.gate)))?;
        let wavelet = WaveletFamily::parse(&self.wavelet)
            .ok_or_else(|| CliError::usage(format!("unknown wavelet family '{}'", self.wavelet)))?;
        let config = TrainConfig {
            tau: self.tau,
            alpha: self.alpha,
            sigma_rel: self.sigma_rel,
            epsilon: self.epsilon,
            delta: self.delta,
            day_len: self.day_len,
            lr_stage1: self.lr_stage1,
            lr_stage2: self.lr_stage2,
            epochs_stage1: self.epochs_stage1,
            epochs_stage2: self.epochs_stage2,
            batch_size: self.batch_size,
            patience: self.patience,
            seed: self.seed,
            gate,
            wavelet,
            buffer_len: self.buffer_len,
            split: self.split,
            hidden_dim: self.hidden_dim,
            fc_hidden: self.fc_hidden.clone(),
            filter_enabled: self.filter_enabled,
            dwt_enabled: self.dwt_enabled,
            freeze_subnets_stage2: self.freeze_subnets_stage2,
            tz_offset_secs: self.tz_offset_hours * 3600,
        };
        config.validate()?;
        Ok(config)
    }
}

/// Ablation grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSettings {
    pub taus: Vec<usize>,
    pub epsilons: Vec<f64>,
    #[serde(default = "default_filter_modes")]
    pub filter: Vec<bool>,
}

fn default_filter_modes() -> Vec<bool> {
    vec![true]
}

impl SweepSettings {
    pub fn to_sweep_spec(&self) -> Result<SweepSpec, CliError> {
        if self.taus.is_empty() || self.epsilons.is_empty() || self.filter.is_empty() {
            return Err(CliError::usage("sweep lists must be non-empty"));
        }
        Ok(SweepSpec {
            taus: self.taus.clone(),
            epsilons: self.epsilons.clone(),
            filter: self.filter.clone(),
        })
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
    }

    /// Canonical serialized form: hashed into output headers.
    pub fn resolved_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Single-line form embedded in output headers and checkpoints.
    pub fn compact_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}
