//! Versioned checkpoint container.
//!
//! Layout: a human-readable header of `key=value` lines (format version,
//! full training config, critical set, grouping), a `blocks` marker line,
//! then named little-endian f64 arrays:
//!
//! ```text
//! loadcast-checkpoint v1\n
//! config.tau=12\n
//! ...\n
//! critical=2,5,9\n
//! groups=2,5|9\n
//! blocks\n
//! [u32 name_len][name utf-8][u64 count][f64 x count] ...
//! ```
//!
//! Block order is fixed, so save -> load -> save reproduces the file byte
//! for byte. Parameter and normalization arrays use the model's block
//! names; training history arrays are stored under `hist.*`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use loadcast_core::dwt::WaveletFamily;
use loadcast_core::grouping::GroupingResult;
use loadcast_core::neural::GateActivation;
use loadcast_core::pipeline::{EpochRecord, ForecastModel, TrainConfig, TrainingHistory};

use crate::error::CliError;

const MAGIC: &str = "loadcast-checkpoint v1";

fn config_lines(c: &TrainConfig) -> Vec<String> {
    let fc: Vec<String> = c.fc_hidden.iter().map(|v| v.to_string()).collect();
    vec![
        format!("config.tau={}", c.tau),
        format!("config.alpha={}", c.alpha),
        format!("config.sigma_rel={}", c.sigma_rel),
        format!("config.epsilon={}", c.epsilon),
        format!("config.delta={}", c.delta),
        format!("config.day_len={}", c.day_len),
        format!("config.lr_stage1={}", c.lr_stage1),
        format!("config.lr_stage2={}", c.lr_stage2),
        format!("config.epochs_stage1={}", c.epochs_stage1),
        format!("config.epochs_stage2={}", c.epochs_stage2),
        format!("config.batch_size={}", c.batch_size),
        format!("config.patience={}", c.patience),
        format!("config.seed={}", c.seed),
        format!("config.gate={}", c.gate.name()),
        format!("config.wavelet={}", c.wavelet.name()),
        format!("config.buffer_len={}", c.buffer_len),
        format!("config.split={},{},{}", c.split[0], c.split[1], c.split[2]),
        format!("config.hidden_dim={}", c.hidden_dim),
        format!("config.fc_hidden={}", fc.join(",")),
        format!("config.filter_enabled={}", c.filter_enabled),
        format!("config.dwt_enabled={}", c.dwt_enabled),
        format!("config.freeze_subnets_stage2={}", c.freeze_subnets_stage2),
        format!("config.tz_offset_secs={}", c.tz_offset_secs),
    ]
}

fn parse_config(kv: &BTreeMap<String, String>) -> Result<TrainConfig, CliError> {
    fn get<'a>(kv: &'a BTreeMap<String, String>, key: &str) -> Result<&'a str, CliError> {
        kv.get(key)
            .map(|s| s.as_str())
            .ok_or_else(|| CliError::data(format!("checkpoint missing '{key}'")))
    }
    fn num<T: std::str::FromStr>(kv: &BTreeMap<String, String>, key: &str) -> Result<T, CliError> {
        get(kv, key)?
            .parse()
            .map_err(|_| CliError::data(format!("checkpoint: bad value for '{key}'")))
    }

    let split_parts: Vec<f64> = get(kv, "config.split")?
        .split(',')
        .map(|s| {
            s.parse()
                .map_err(|_| CliError::data("checkpoint: bad split"))
        })
        .collect::<Result<_, _>>()?;
    if split_parts.len() != 3 {
        return Err(CliError::data("checkpoint: split needs 3 fractions"));
    }
    let fc_raw = get(kv, "config.fc_hidden")?;
    let fc_hidden: Vec<usize> = if fc_raw.is_empty() {
        Vec::new()
    } else {
        fc_raw
            .split(',')
            .map(|s| {
                s.parse()
                    .map_err(|_| CliError::data("checkpoint: bad fc_hidden"))
            })
            .collect::<Result<_, _>>()?
    };

    Ok(TrainConfig {
        tau: num(kv, "config.tau")?,
        alpha: num(kv, "config.alpha")?,
        sigma_rel: num(kv, "config.sigma_rel")?,
        epsilon: num(kv, "config.epsilon")?,
        delta: num(kv, "config.delta")?,
        day_len: num(kv, "config.day_len")?,
        lr_stage1: num(kv, "config.lr_stage1")?,
        lr_stage2: num(kv, "config.lr_stage2")?,
        epochs_stage1: num(kv, "config.epochs_stage1")?,
        epochs_stage2: num(kv, "config.epochs_stage2")?,
        batch_size: num(kv, "config.batch_size")?,
        patience: num(kv, "config.patience")?,
        seed: num(kv, "config.seed")?,
        gate: GateActivation::parse(get(kv, "config.gate")?)
            .ok_or_else(|| CliError::data("checkpoint: unknown gate activation"))?,
        wavelet: WaveletFamily::parse(get(kv, "config.wavelet")?)
            .ok_or_else(|| CliError::data("checkpoint: unknown wavelet family"))?,
        buffer_len: num(kv, "config.buffer_len")?,
        split: [split_parts[0], split_parts[1], split_parts[2]],
        hidden_dim: num(kv, "config.hidden_dim")?,
        fc_hidden,
        filter_enabled: num(kv, "config.filter_enabled")?,
        dwt_enabled: num(kv, "config.dwt_enabled")?,
        freeze_subnets_stage2: num(kv, "config.freeze_subnets_stage2")?,
        tz_offset_secs: num(kv, "config.tz_offset_secs")?,
    })
}

fn history_blocks(history: &TrainingHistory) -> Vec<(String, Vec<f64>)> {
    fn pair(records: &[EpochRecord]) -> (Vec<f64>, Vec<f64>) {
        (
            records.iter().map(|r| r.train_loss).collect(),
            records.iter().map(|r| r.val_loss).collect(),
        )
    }
    let mut out = Vec::new();
    for (i, h) in history.group.iter().enumerate() {
        let (t, v) = pair(h);
        out.push((format!("hist.group{i}.train"), t));
        out.push((format!("hist.group{i}.val"), v));
    }
    let (t, v) = pair(&history.agg);
    out.push(("hist.agg.train".to_string(), t));
    out.push(("hist.agg.val".to_string(), v));
    let (t, v) = pair(&history.stage2);
    out.push(("hist.stage2.train".to_string(), t));
    out.push(("hist.stage2.val".to_string(), v));
    out
}

fn records_from(train: &[f64], val: &[f64]) -> Vec<EpochRecord> {
    train
        .iter()
        .zip(val)
        .map(|(&t, &v)| EpochRecord {
            train_loss: t,
            val_loss: v,
        })
        .collect()
}

/// Writes the model and its training history. `run_config_json`, when
/// given, is echoed into the header so the full run configuration travels
/// with the model.
pub fn save_checkpoint(
    path: &Path,
    model: &ForecastModel,
    history: &TrainingHistory,
    run_config_json: Option<&str>,
) -> Result<(), CliError> {
    let mut out = Vec::new();
    writeln!(out, "{MAGIC}").unwrap();
    if let Some(json) = run_config_json {
        debug_assert!(!json.contains('\n'));
        writeln!(out, "runconfig={json}").unwrap();
    }
    for line in config_lines(&model.config) {
        writeln!(out, "{line}").unwrap();
    }
    let critical: Vec<String> = model.critical_ids.iter().map(|id| id.to_string()).collect();
    writeln!(out, "critical={}", critical.join(",")).unwrap();
    let groups: Vec<String> = model
        .grouping
        .groups
        .iter()
        .map(|g| {
            g.iter()
                .map(|id| id.to_string())
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect();
    writeln!(out, "groups={}", groups.join("|")).unwrap();
    writeln!(out, "blocks").unwrap();

    let mut blocks = model.state_blocks();
    blocks.extend(history_blocks(history));
    for (name, data) in &blocks {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(data.len() as u64).to_le_bytes());
        for v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// A checkpoint read back from disk.
#[derive(Debug)]
pub struct LoadedCheckpoint {
    pub model: ForecastModel,
    pub history: TrainingHistory,
    /// The run configuration the training run embedded, when present.
    pub run_config_json: Option<String>,
}

/// Reads a checkpoint back into a model and its history.
pub fn load_checkpoint(path: &Path) -> Result<LoadedCheckpoint, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;

    // Header: text lines up to and including the `blocks` marker.
    let marker = b"\nblocks\n";
    let header_end = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| {
            CliError::data(format!("{}: truncated checkpoint header", path.display()))
        })?;
    let header = std::str::from_utf8(&bytes[..header_end])
        .map_err(|_| CliError::data(format!("{}: malformed header", path.display())))?;
    let mut lines = header.lines();
    let magic = lines.next().unwrap_or("");
    if magic != MAGIC {
        return Err(CliError::data(format!(
            "{}: unsupported checkpoint version '{magic}' (expected '{MAGIC}')",
            path.display()
        )));
    }
    let mut kv: BTreeMap<String, String> = BTreeMap::new();
    for line in lines {
        if let Some((k, v)) = line.split_once('=') {
            kv.insert(k.to_string(), v.to_string());
        }
    }

    let config = parse_config(&kv)?;
    let critical: Vec<u32> = match kv.get("critical").map(|s| s.as_str()).unwrap_or("") {
        "" => Vec::new(),
        s => s
            .split(',')
            .map(|t| {
                t.parse()
                    .map_err(|_| CliError::data("checkpoint: bad critical ids"))
            })
            .collect::<Result<_, _>>()?,
    };
    let groups: Vec<Vec<u32>> = match kv.get("groups").map(|s| s.as_str()).unwrap_or("") {
        "" => Vec::new(),
        s => s
            .split('|')
            .map(|grp| {
                grp.split(',')
                    .map(|t| {
                        t.parse()
                            .map_err(|_| CliError::data("checkpoint: bad group ids"))
                    })
                    .collect()
            })
            .collect::<Result<_, _>>()?,
    };
    let grouping = GroupingResult {
        groups,
        epsilon: config.epsilon,
    };
    let mut model = ForecastModel::assemble(config, critical, grouping)
        .map_err(|e| CliError::data(format!("checkpoint: {e}")))?;

    // Binary blocks.
    let mut cursor = &bytes[header_end + marker.len()..];
    let mut hist: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let truncated = || CliError::data(format!("{}: truncated checkpoint blocks", path.display()));
    while !cursor.is_empty() {
        let mut len4 = [0u8; 4];
        cursor.read_exact(&mut len4).map_err(|_| truncated())?;
        let name_len = u32::from_le_bytes(len4) as usize;
        if cursor.len() < name_len {
            return Err(truncated());
        }
        let name = std::str::from_utf8(&cursor[..name_len])
            .map_err(|_| CliError::data("checkpoint: bad block name"))?
            .to_string();
        cursor = &cursor[name_len..];
        let mut len8 = [0u8; 8];
        cursor.read_exact(&mut len8).map_err(|_| truncated())?;
        let count = u64::from_le_bytes(len8) as usize;
        if cursor.len() < count * 8 {
            return Err(truncated());
        }
        let mut data = Vec::with_capacity(count);
        for i in 0..count {
            let mut f8 = [0u8; 8];
            f8.copy_from_slice(&cursor[i * 8..i * 8 + 8]);
            data.push(f64::from_le_bytes(f8));
        }
        cursor = &cursor[count * 8..];

        if name.starts_with("hist.") {
            hist.insert(name, data);
        } else {
            model
                .load_state_block(&name, &data)
                .map_err(|e| CliError::data(format!("checkpoint: {e}")))?;
        }
    }

    let empty: Vec<f64> = Vec::new();
    let fetch = |k: &str| hist.get(k).unwrap_or(&empty).clone();
    let mut history = TrainingHistory::default();
    for i in 0..model.group_count() {
        history.group.push(records_from(
            &fetch(&format!("hist.group{i}.train")),
            &fetch(&format!("hist.group{i}.val")),
        ));
    }
    history.agg = records_from(&fetch("hist.agg.train"), &fetch("hist.agg.val"));
    history.stage2 = records_from(&fetch("hist.stage2.train"), &fetch("hist.stage2.val"));

    Ok(LoadedCheckpoint {
        model,
        history,
        run_config_json: kv.remove("runconfig"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use loadcast_core::pipeline::{build_model, predict_sample, prepare_datasets, run_pipeline};
    use loadcast_core::synth::{generate_household, preset_by_name};

    fn small_run() -> (
        loadcast_core::panel::AppliancePanel,
        loadcast_core::pipeline::PipelineRun,
    ) {
        let mut spec = preset_by_name("critical-vs-noise").unwrap();
        spec.days = 10;
        let (panel, _) = generate_household(&spec).unwrap();
        let config = TrainConfig {
            tau: 4,
            hidden_dim: 4,
            fc_hidden: vec![6],
            epochs_stage1: 2,
            epochs_stage2: 2,
            buffer_len: 16,
            epsilon: 0.3,
            ..TrainConfig::default()
        };
        let run = run_pipeline(&panel, &config).unwrap();
        (panel, run)
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let (_, run) = small_run();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.ckpt");
        let p2 = dir.path().join("b.ckpt");
        save_checkpoint(&p1, &run.model, &run.history, Some("{\"demo\":1}")).unwrap();
        let loaded = load_checkpoint(&p1).unwrap();
        assert_eq!(loaded.run_config_json.as_deref(), Some("{\"demo\":1}"));
        save_checkpoint(
            &p2,
            &loaded.model,
            &loaded.history,
            loaded.run_config_json.as_deref(),
        )
        .unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    }

    #[test]
    fn loaded_model_predicts_bitwise_identically() {
        let (panel, run) = small_run();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&path, &run.model, &run.history, None).unwrap();
        let loaded = load_checkpoint(&path).unwrap().model;

        let data = prepare_datasets(&panel, &run.model).unwrap();
        for s in data.test.clone() {
            let a = predict_sample(&run.model, &data, s).unwrap();
            let b = predict_sample(&loaded, &data, s).unwrap();
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn truncated_file_is_a_clean_error() {
        let (_, run) = small_run();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&path, &run.model, &run.history, None).unwrap();
        let bytes = fs::read(&path).unwrap();
        for cut in [bytes.len() / 4, bytes.len() / 2, bytes.len() - 3] {
            let p = dir.path().join(format!("cut{cut}.ckpt"));
            fs::write(&p, &bytes[..cut]).unwrap();
            let err = load_checkpoint(&p).unwrap_err();
            assert!(err.to_string().contains("truncated"), "cut={cut}: {err}");
        }
    }

    #[test]
    fn version_mismatch_is_explicit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        fs::write(&path, b"loadcast-checkpoint v99\nblocks\n").unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(
            err.to_string().contains("unsupported checkpoint version"),
            "{err}"
        );
    }

    #[test]
    fn history_round_trips() {
        let (_, run) = small_run();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&path, &run.model, &run.history, None).unwrap();
        let history = load_checkpoint(&path).unwrap().history;
        assert_eq!(history.agg.len(), run.history.agg.len());
        assert_eq!(history.stage2.len(), run.history.stage2.len());
        for (a, b) in history.agg.iter().zip(&run.history.agg) {
            assert_eq!(a.train_loss.to_bits(), b.train_loss.to_bits());
        }
    }

    #[test]
    fn config_survives_the_header() {
        let (_, run) = small_run();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&path, &run.model, &run.history, None).unwrap();
        let model = load_checkpoint(&path).unwrap().model;
        assert_eq!(model.config, run.model.config);
        assert_eq!(model.critical_ids, run.model.critical_ids);
        assert_eq!(model.grouping.groups, run.model.grouping.groups);
    }

    #[test]
    fn assemble_build_parity() {
        // A model assembled from checkpoint metadata maps state blocks
        // one-to-one with a freshly built model.
        let mut spec = preset_by_name("critical-vs-noise").unwrap();
        spec.days = 10;
        let (panel, _) = generate_household(&spec).unwrap();
        let config = TrainConfig {
            tau: 4,
            hidden_dim: 4,
            fc_hidden: vec![6],
            buffer_len: 16,
            epsilon: 0.3,
            ..TrainConfig::default()
        };
        let (model, _) = build_model(&panel, &config).unwrap();
        let names_a: Vec<String> = model.state_blocks().into_iter().map(|(n, _)| n).collect();
        let rebuilt =
            ForecastModel::assemble(config, model.critical_ids.clone(), model.grouping.clone())
                .unwrap();
        let names_b: Vec<String> = rebuilt.state_blocks().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names_a, names_b);
    }
}
