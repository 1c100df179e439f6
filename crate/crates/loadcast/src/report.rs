//! Provenance-stamped CSV and JSON outputs.
//!
//! Every file starts with `# ` comment lines carrying the tool version, a
//! hash of the resolved configuration, the seed, and a timestamp (frozen
//! by `--fixed-timestamp` so byte-level reproducibility is testable).

use std::fs;
use std::io::Write;
use std::path::Path;

use loadcast_core::eval::{AblationRow, MetricReport};
use loadcast_core::filtering::{ContributionTable, FilterResult};
use loadcast_core::grouping::{DistanceMatrix, GroupingResult};
use loadcast_core::panel::AppliancePanel;
use loadcast_core::pipeline::TrainingHistory;
use loadcast_core::synth::GroundTruth;

use crate::error::CliError;
use crate::ingest::format_timestamp;

/// FNV-1a over the canonical config text.
pub fn config_hash(text: &str) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for b in text.as_bytes() {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Header stamped on every output file.
#[derive(Debug, Clone)]
pub struct Provenance {
    pub config_hash: u64,
    pub seed: u64,
    /// Resolved run configuration as compact JSON, echoed verbatim.
    pub config_json: String,
    /// None freezes the timestamp for reproducibility tests.
    pub timestamp: Option<String>,
}

impl Provenance {
    pub fn header_lines(&self) -> Vec<String> {
        vec![
            format!("# loadcast v{}", crate::VERSION),
            format!("# config_hash: {:016x}", self.config_hash),
            format!("# seed: {}", self.seed),
            format!("# config: {}", self.config_json),
            format!(
                "# generated_at: {}",
                self.timestamp.as_deref().unwrap_or("1970-01-01T00:00:00Z")
            ),
        ]
    }
}

fn open_with_header(path: &Path, prov: &Provenance) -> Result<fs::File, CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut file = fs::File::create(path)?;
    for line in prov.header_lines() {
        writeln!(file, "{line}")?;
    }
    Ok(file)
}

/// `appliance,vola,period,ctrb,selected,residual_std_after`
pub fn write_contribution_csv(
    path: &Path,
    prov: &Provenance,
    table: &ContributionTable,
    filter: &FilterResult,
) -> Result<(), CliError> {
    let file = open_with_header(path, prov)?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record([
        "appliance",
        "vola",
        "period",
        "ctrb",
        "selected",
        "residual_std_after",
    ])?;
    for (rank, entry) in table.entries().iter().enumerate() {
        let selected = filter.critical_ids.contains(&entry.id);
        let residual = if selected {
            format!("{}", filter.residual_std_trace[rank + 1])
        } else {
            String::new()
        };
        w.write_record([
            entry.name.as_str(),
            &format!("{}", entry.vola),
            &format!("{}", entry.period),
            &format!("{}", entry.ctrb),
            if selected { "true" } else { "false" },
            &residual,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Distance matrix CSV: header row/column of appliance names.
pub fn write_distance_csv(
    path: &Path,
    prov: &Provenance,
    dist: &DistanceMatrix,
    names: &[String],
) -> Result<(), CliError> {
    let file = open_with_header(path, prov)?;
    let mut w = csv::Writer::from_writer(file);
    let mut header = vec!["appliance".to_string()];
    header.extend_from_slice(names);
    w.write_record(&header)?;
    for (i, name) in names.iter().enumerate() {
        let mut row = vec![name.clone()];
        for j in 0..dist.len() {
            row.push(format!("{}", dist.get(i, j)));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Groups as JSON: `[{"group": 0, "members": [...], "names": [...]}]`.
pub fn write_groups_json(
    path: &Path,
    prov: &Provenance,
    grouping: &GroupingResult,
    panel: &AppliancePanel,
) -> Result<(), CliError> {
    let groups: Vec<serde_json::Value> = grouping
        .groups
        .iter()
        .enumerate()
        .map(|(i, members)| {
            serde_json::json!({
                "group": i,
                "members": members,
                "names": members.iter().map(|&id| panel.name_of(id)).collect::<Vec<_>>(),
            })
        })
        .collect();
    let doc = serde_json::json!({
        "tool_version": crate::VERSION,
        "config_hash": format!("{:016x}", prov.config_hash),
        "seed": prov.seed,
        "epsilon": grouping.epsilon,
        "groups": groups,
    });
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, serde_json::to_string_pretty(&doc)? + "\n")?;
    Ok(())
}

/// `tau,epsilon,filter,seed,mae_kw,mape_pct,n_eval,n_skipped`
pub fn write_metrics_csv(
    path: &Path,
    prov: &Provenance,
    rows: &[(usize, f64, bool, u64, Option<MetricReport>)],
) -> Result<(), CliError> {
    let file = open_with_header(path, prov)?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record([
        "tau",
        "epsilon",
        "filter",
        "seed",
        "mae_kw",
        "mape_pct",
        "n_eval",
        "n_skipped",
    ])?;
    for (tau, epsilon, filter, seed, report) in rows {
        match report {
            Some(r) => w.write_record([
                tau.to_string(),
                format!("{epsilon}"),
                filter.to_string(),
                seed.to_string(),
                format!("{}", r.mae),
                format!("{}", r.mape * 100.0),
                r.n_evaluated.to_string(),
                r.n_skipped_zero_target.to_string(),
            ])?,
            None => w.write_record([
                tau.to_string(),
                format!("{epsilon}"),
                filter.to_string(),
                seed.to_string(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
            ])?,
        }
    }
    w.flush()?;
    Ok(())
}

/// Ablation rows in sweep order; failed cells keep their knobs but leave
/// the metric fields empty, with the error recorded as a trailing comment.
pub fn write_ablation_csv(
    path: &Path,
    prov: &Provenance,
    rows: &[AblationRow],
) -> Result<(), CliError> {
    let mut failures = Vec::new();
    let table: Vec<(usize, f64, bool, u64, Option<MetricReport>)> = rows
        .iter()
        .map(|row| {
            let report = match &row.outcome {
                Ok(r) => Some(r.clone()),
                Err(e) => {
                    failures.push(format!(
                        "# failed: tau={} epsilon={} filter={} seed={}: {e}",
                        row.cell.tau, row.cell.epsilon, row.cell.filter_on, row.cell.seed
                    ));
                    None
                }
            };
            (
                row.cell.tau,
                row.cell.epsilon,
                row.cell.filter_on,
                row.cell.seed,
                report,
            )
        })
        .collect();
    write_metrics_csv(path, prov, &table)?;
    if !failures.is_empty() {
        let mut file = fs::OpenOptions::new().append(true).open(path)?;
        for line in failures {
            writeln!(file, "{line}")?;
        }
    }
    Ok(())
}

/// `component,epoch,train_loss,val_loss`
pub fn write_history_csv(
    path: &Path,
    prov: &Provenance,
    history: &TrainingHistory,
) -> Result<(), CliError> {
    let file = open_with_header(path, prov)?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["component", "epoch", "train_loss", "val_loss"])?;
    let mut write =
        |name: &str, records: &[loadcast_core::pipeline::EpochRecord]| -> Result<(), CliError> {
            for (epoch, r) in records.iter().enumerate() {
                w.write_record([
                    name.to_string(),
                    epoch.to_string(),
                    format!("{}", r.train_loss),
                    format!("{}", r.val_loss),
                ])?;
            }
            Ok(())
        };
    for (i, h) in history.group.iter().enumerate() {
        write(&format!("group{i}"), h)?;
    }
    write("agg", &history.agg)?;
    write("stage2", &history.stage2)?;
    w.flush()?;
    Ok(())
}

/// `timestamp,forecast_kw,actual_kw` (actual empty for unseen steps).
pub fn write_predictions_csv(
    path: &Path,
    prov: &Provenance,
    rows: &[(i64, f64, Option<f64>)],
) -> Result<(), CliError> {
    let file = open_with_header(path, prov)?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["timestamp", "forecast_kw", "actual_kw"])?;
    for (ts, forecast, actual) in rows {
        w.write_record([
            format_timestamp(*ts),
            format!("{forecast}"),
            actual.map(|a| format!("{a}")).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Ground truth of a synthetic household as JSON.
pub fn write_ground_truth_json(
    path: &Path,
    prov: &Provenance,
    truth: &GroundTruth,
) -> Result<(), CliError> {
    let appliances: Vec<serde_json::Value> = truth
        .appliances
        .iter()
        .map(|a| {
            serde_json::json!({
                "id": a.id,
                "name": a.name,
                "power_kw": a.power_kw,
                "variance_kw2": a.variance_kw2,
                "variance_share": a.variance_share,
                "regular": a.regular,
            })
        })
        .collect();
    let links: Vec<serde_json::Value> = truth
        .links
        .iter()
        .map(|l| serde_json::json!({"from": l.from, "to": l.to, "lag_hours": l.lag_hours}))
        .collect();
    let doc = serde_json::json!({
        "tool_version": crate::VERSION,
        "config_hash": format!("{:016x}", prov.config_hash),
        "seed": prov.seed,
        "appliances": appliances,
        "links": links,
    });
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, serde_json::to_string_pretty(&doc)? + "\n")?;
    Ok(())
}
