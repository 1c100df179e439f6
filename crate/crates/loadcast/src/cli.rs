//! Subcommand driver.
//!
//! One process runs one subcommand against one data source. Every run
//! prints the resolved configuration and seed to stderr and stamps its
//! output files with a config hash, so any table can be traced back to the
//! exact run that produced it.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 training failure.

use std::path::PathBuf;
use std::sync::mpsc;

use clap::{Args, Parser, Subcommand};
use loadcast_core::eval::{run_cell, AblationRow, MetricReport};
use loadcast_core::panel::AppliancePanel;
use loadcast_core::pipeline::{
    predict_next, predict_sample, prepare_datasets, run_pipeline, select_and_group, TrainConfig,
};
use loadcast_core::synth::{generate_household, preset_by_name};

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::config::{DataSource, RunConfig, SweepSettings};
use crate::error::CliError;
use crate::ingest::{load_csv_panel, load_ukdale_house, parse_timestamp, write_csv_panel};
use crate::report::{
    config_hash, write_ablation_csv, write_contribution_csv, write_distance_csv,
    write_ground_truth_json, write_groups_json, write_history_csv, write_metrics_csv,
    write_predictions_csv, Provenance,
};

#[derive(Parser, Debug)]
#[command(
    name = "loadcast",
    version,
    about = "Bottom-up short-term load forecasting: select critical appliances, group them by usage correlation, and forecast the next hour's total load."
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Panel CSV data source (overrides the config's data source).
    #[arg(long, global = true)]
    csv: Option<PathBuf>,

    /// UK-DALE house directory data source.
    #[arg(long, global = true)]
    ukdale_dir: Option<PathBuf>,

    /// Comma-separated appliance channels for --ukdale-dir.
    #[arg(long, global = true)]
    channels: Option<String>,

    /// Aggregate channel number for --ukdale-dir.
    #[arg(long, global = true, default_value_t = 1)]
    aggregate_channel: u32,

    /// Built-in synthetic scenario as the data source.
    #[arg(long, global = true)]
    preset: Option<String>,

    /// Analysis range start (ISO-8601 or epoch seconds), inclusive.
    #[arg(long, global = true)]
    start: Option<String>,

    /// Analysis range end, exclusive.
    #[arg(long, global = true)]
    end: Option<String>,

    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    /// Freeze output-file timestamps (for byte-identical reruns).
    #[arg(long, global = true)]
    fixed_timestamp: bool,

    /// Worker threads for independent sweep cells.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,

    #[command(flatten)]
    overrides: TrainOverrides,
}

/// Flag-level overrides of config keys.
#[derive(Args, Debug)]
struct TrainOverrides {
    #[arg(long, global = true)]
    tau: Option<usize>,
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    sigma_rel: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Gate activation: sigmoid (standard) or relu.
    #[arg(long, global = true)]
    gate: Option<String>,
    /// Wavelet family: haar or db4.
    #[arg(long, global = true)]
    wavelet: Option<String>,
    /// Keep every monitored appliance instead of filtering.
    #[arg(long, global = true)]
    no_filter: bool,
    /// Feed the total-load forecaster the raw window instead of wavelet bands.
    #[arg(long, global = true)]
    no_dwt: bool,
    /// Freeze pretrained heads during stage-two fine-tuning.
    #[arg(long, global = true)]
    freeze_subnets: bool,
    /// Timezone offset applied to calendar context, hours.
    #[arg(long, global = true)]
    tz_offset_hours: Option<i64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic household panel and its ground truth.
    Synth {
        /// Override the scenario length in days.
        #[arg(long)]
        days: Option<usize>,
    },
    /// Load a data source and write the canonical panel CSV.
    Ingest,
    /// Score appliance contributions and select the critical set.
    Filter,
    /// Compute usage-correlation distances and cluster the critical set.
    Group,
    /// Run the full two-stage training and save a checkpoint.
    Train,
    /// Roll one-step forecasts from a checkpoint over the panel.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Evaluate a checkpoint on the chronological test split.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Sweep window length, clustering radius, and filtering on/off.
    Ablate,
}

/// Entry point; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            eprintln!("{e}");
            return 1;
        }
        Err(e) => {
            // Help and version requests.
            print!("{e}");
            return 0;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let mut run_config = resolve_run_config(&cli)?;
    apply_overrides(&cli, &mut run_config);

    let resolved = run_config.resolved_json();
    let train_config = run_config.train.to_train_config()?;
    eprintln!("resolved config (seed {}):\n{resolved}", train_config.seed);

    let prov = Provenance {
        config_hash: config_hash(&resolved),
        seed: train_config.seed,
        config_json: run_config.compact_json(),
        timestamp: if cli.fixed_timestamp {
            None
        } else {
            Some(crate::ingest::format_timestamp(
                chrono::Utc::now().timestamp(),
            ))
        },
    };
    let out_dir = run_config.output_dir.clone();
    std::fs::create_dir_all(&out_dir)?;

    match &cli.command {
        Command::Synth { days } => cmd_synth(&run_config, *days, &prov, &out_dir),
        Command::Ingest => {
            let panel = load_panel(&run_config)?;
            write_csv_panel(&out_dir.join("panel.csv"), &panel, &prov.header_lines())?;
            eprintln!(
                "panel: {} appliances, {} hours, {} masked sum violations",
                panel.appliance_count(),
                panel.len(),
                panel.violations()
            );
            Ok(())
        }
        Command::Filter => cmd_filter(&run_config, &train_config, &prov, &out_dir),
        Command::Group => cmd_group(&run_config, &train_config, &prov, &out_dir),
        Command::Train => cmd_train(&run_config, &train_config, &prov, &out_dir),
        Command::Predict { checkpoint } => cmd_predict(&run_config, checkpoint, &prov, &out_dir),
        Command::Evaluate { checkpoint } => cmd_evaluate(&run_config, checkpoint, &prov, &out_dir),
        Command::Ablate => cmd_ablate(&run_config, &train_config, cli.workers, &prov, &out_dir),
    }
}

/// Builds the run configuration from `--config` and/or data-source flags.
fn resolve_run_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => {
            // A data-source flag can stand in for a config file.
            let data = flag_data_source(cli)?.ok_or_else(|| {
                CliError::usage("no data source: pass --config, --csv, --ukdale-dir, or --preset")
            })?;
            serde_json::from_value(serde_json::json!({ "data": data }))?
        }
    };
    if let Some(data) = flag_data_source(cli)? {
        config.data = serde_json::from_value(data)?;
    }
    Ok(config)
}

fn flag_data_source(cli: &Cli) -> Result<Option<serde_json::Value>, CliError> {
    let mut sources = 0;
    let mut out = None;
    if let Some(path) = &cli.csv {
        sources += 1;
        out = Some(serde_json::json!({"kind": "csv", "path": path}));
    }
    if let Some(dir) = &cli.ukdale_dir {
        sources += 1;
        let channels: Vec<u32> = cli
            .channels
            .as_deref()
            .ok_or_else(|| CliError::usage("--ukdale-dir requires --channels"))?
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| CliError::usage("bad --channels list"))
            })
            .collect::<Result<_, _>>()?;
        out = Some(serde_json::json!({
            "kind": "ukdale",
            "dir": dir,
            "channels": channels,
            "aggregate_channel": cli.aggregate_channel,
        }));
    }
    if let Some(name) = &cli.preset {
        sources += 1;
        out = Some(serde_json::json!({"kind": "preset", "name": name}));
    }
    if sources > 1 {
        return Err(CliError::usage(
            "pass at most one of --csv, --ukdale-dir, --preset",
        ));
    }
    Ok(out)
}

fn apply_overrides(cli: &Cli, config: &mut RunConfig) {
    let o = &cli.overrides;
    let t = &mut config.train;
    if let Some(v) = o.tau {
        t.tau = v;
    }
    if let Some(v) = o.epsilon {
        t.epsilon = v;
    }
    if let Some(v) = o.alpha {
        t.alpha = v;
    }
    if let Some(v) = o.sigma_rel {
        t.sigma_rel = v;
    }
    if let Some(v) = o.seed {
        t.seed = v;
    }
    if let Some(v) = &o.gate {
        t.gate = v.clone();
    }
    if let Some(v) = &o.wavelet {
        t.wavelet = v.clone();
    }
    if o.no_filter {
        t.filter_enabled = false;
    }
    if o.no_dwt {
        t.dwt_enabled = false;
    }
    if o.freeze_subnets {
        t.freeze_subnets_stage2 = true;
    }
    if let Some(v) = o.tz_offset_hours {
        t.tz_offset_hours = v;
    }
    if let Some(dir) = &cli.output_dir {
        config.output_dir = dir.clone();
    }
    if let Some(s) = &cli.start {
        config.start = Some(s.clone());
    }
    if let Some(s) = &cli.end {
        config.end = Some(s.clone());
    }
}

/// Loads the panel named by the data source and applies the date range.
fn load_panel(config: &RunConfig) -> Result<AppliancePanel, CliError> {
    let panel = match &config.data {
        DataSource::Csv { path } => load_csv_panel(path)?,
        DataSource::Ukdale {
            dir,
            channels,
            aggregate_channel,
        } => load_ukdale_house(dir, channels, *aggregate_channel)?,
        DataSource::Preset { name, days, seed } => {
            let mut spec = preset_by_name(name).ok_or_else(|| {
                CliError::usage(format!(
                    "unknown preset '{name}' (try: critical-vs-noise, two-linked-groups, periodic-vs-erratic, forecast-bench)"
                ))
            })?;
            if let Some(d) = days {
                spec.days = *d;
            }
            if let Some(s) = seed {
                spec.seed = *s;
            }
            generate_household(&spec)?.0
        }
    };
    apply_range(panel, config)
}

fn apply_range(panel: AppliancePanel, config: &RunConfig) -> Result<AppliancePanel, CliError> {
    let start = match &config.start {
        Some(s) => parse_timestamp(s)?,
        None => i64::MIN,
    };
    let end = match &config.end {
        Some(s) => parse_timestamp(s)?,
        None => i64::MAX,
    };
    if config.start.is_none() && config.end.is_none() {
        return Ok(panel);
    }
    Ok(panel.align(start, end)?)
}

fn cmd_synth(
    config: &RunConfig,
    days: Option<usize>,
    prov: &Provenance,
    out_dir: &std::path::Path,
) -> Result<(), CliError> {
    let DataSource::Preset {
        name,
        days: config_days,
        seed,
    } = &config.data
    else {
        return Err(CliError::usage(
            "synth needs a preset data source (--preset NAME)",
        ));
    };
    let mut spec =
        preset_by_name(name).ok_or_else(|| CliError::usage(format!("unknown preset '{name}'")))?;
    if let Some(d) = days.or(*config_days) {
        spec.days = d;
    }
    if let Some(s) = seed {
        spec.seed = *s;
    }
    let (panel, truth) = generate_household(&spec)?;
    write_csv_panel(&out_dir.join("panel.csv"), &panel, &prov.header_lines())?;
    write_ground_truth_json(&out_dir.join("ground_truth.json"), prov, &truth)?;
    eprintln!("wrote {} hours for '{}'", panel.len(), spec.name);
    Ok(())
}

fn cmd_filter(
    config: &RunConfig,
    train: &TrainConfig,
    prov: &Provenance,
    out_dir: &std::path::Path,
) -> Result<(), CliError> {
    let panel = load_panel(config)?;
    let selection = select_and_group(&panel, train)?;
    write_contribution_csv(
        &out_dir.join("contribution.csv"),
        prov,
        &selection.table,
        &selection.filter,
    )?;
    eprintln!(
        "selected {} of {} appliances (sigma = {} kW, {} clamped samples)",
        selection.filter.critical_ids.len(),
        panel.appliance_count(),
        selection.filter.sigma,
        selection.filter.clamped
    );
    Ok(())
}

fn cmd_group(
    config: &RunConfig,
    train: &TrainConfig,
    prov: &Provenance,
    out_dir: &std::path::Path,
) -> Result<(), CliError> {
    let panel = load_panel(config)?;
    let selection = select_and_group(&panel, train)?;
    let names: Vec<String> = selection
        .critical_ids
        .iter()
        .map(|&id| panel.name_of(id))
        .collect();
    write_distance_csv(
        &out_dir.join("distance_matrix.csv"),
        prov,
        &selection.distances,
        &names,
    )?;
    write_groups_json(
        &out_dir.join("groups.json"),
        prov,
        &selection.grouping,
        &panel,
    )?;
    eprintln!(
        "{} critical appliances -> {} groups at epsilon {}",
        selection.critical_ids.len(),
        selection.grouping.group_count(),
        selection.grouping.epsilon
    );
    Ok(())
}

fn training_error(e: CliError) -> CliError {
    // Anything that goes wrong inside the training loop is a training
    // failure for exit-code purposes.
    match e {
        CliError::Data(msg) => CliError::Training(msg),
        other => other,
    }
}

fn cmd_train(
    config: &RunConfig,
    train: &TrainConfig,
    prov: &Provenance,
    out_dir: &std::path::Path,
) -> Result<(), CliError> {
    let panel = load_panel(config)?;
    let run = run_pipeline(&panel, train).map_err(|e| training_error(e.into()))?;

    save_checkpoint(
        &out_dir.join("model.ckpt"),
        &run.model,
        &run.history,
        Some(&prov.config_json),
    )?;
    write_history_csv(&out_dir.join("history.csv"), prov, &run.history)?;
    write_metrics_csv(
        &out_dir.join("metrics.csv"),
        prov,
        &[(
            train.tau,
            train.epsilon,
            train.filter_enabled,
            train.seed,
            Some(run.test_report.clone()),
        )],
    )?;
    let rows: Vec<(i64, f64, Option<f64>)> = run
        .test_predictions
        .iter()
        .map(|&(pos, forecast, actual)| (panel.index().timestamp(pos), forecast, Some(actual)))
        .collect();
    write_predictions_csv(&out_dir.join("predictions.csv"), prov, &rows)?;

    eprintln!(
        "test MAE {:.4} kW, MAPE {:.2}% over {} samples ({} groups; baseline persistence MAPE {:.2}%)",
        run.test_report.mae,
        run.test_report.mape * 100.0,
        run.test_report.n_evaluated,
        run.model.group_count(),
        run.persistence_report.mape * 100.0,
    );
    Ok(())
}

fn cmd_predict(
    config: &RunConfig,
    checkpoint: &std::path::Path,
    prov: &Provenance,
    out_dir: &std::path::Path,
) -> Result<(), CliError> {
    let panel = load_panel(config)?;
    let model = load_checkpoint(checkpoint)?.model;
    let data = prepare_datasets(&panel, &model)?;

    let mut rows: Vec<(i64, f64, Option<f64>)> = Vec::with_capacity(data.len() + 1);
    for s in 0..data.len() {
        let forecast = predict_sample(&model, &data, s)?;
        rows.push((
            panel.index().timestamp(data.positions[s]),
            forecast,
            Some(data.total_targets[s]),
        ));
    }
    // One step past the observed end, when the trailing history allows it.
    match predict_next(&model, &panel, panel.len()) {
        Ok(forecast) => rows.push((panel.index().timestamp(panel.len()), forecast, None)),
        Err(e) => eprintln!("no next-step forecast: {e}"),
    }
    write_predictions_csv(&out_dir.join("predictions.csv"), prov, &rows)?;
    eprintln!("wrote {} forecasts", rows.len());
    Ok(())
}

fn cmd_evaluate(
    config: &RunConfig,
    checkpoint: &std::path::Path,
    prov: &Provenance,
    out_dir: &std::path::Path,
) -> Result<(), CliError> {
    let panel = load_panel(config)?;
    let model = load_checkpoint(checkpoint)?.model;
    let data = prepare_datasets(&panel, &model)?;

    let mut preds = Vec::with_capacity(data.test.len());
    for s in data.test.clone() {
        preds.push(predict_sample(&model, &data, s)?);
    }
    let report = loadcast_core::eval::metric_report(&preds, &data.total_targets[data.test.clone()]);
    write_metrics_csv(
        &out_dir.join("metrics.csv"),
        prov,
        &[(
            model.config.tau,
            model.config.epsilon,
            model.config.filter_enabled,
            model.config.seed,
            Some(report.clone()),
        )],
    )?;
    eprintln!(
        "test MAE {:.4} kW, MAPE {:.2}% over {} samples ({} zero-target skipped)",
        report.mae,
        report.mape * 100.0,
        report.n_evaluated,
        report.n_skipped_zero_target
    );
    Ok(())
}

fn cmd_ablate(
    config: &RunConfig,
    train: &TrainConfig,
    workers: usize,
    prov: &Provenance,
    out_dir: &std::path::Path,
) -> Result<(), CliError> {
    let sweep_settings: &SweepSettings = config
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::usage("ablate needs a 'sweep' section in the config"))?;
    let sweep = sweep_settings.to_sweep_spec()?;
    let panel = load_panel(config)?;
    let cells = sweep.cells(train.seed);

    let rows: Vec<AblationRow> = if workers <= 1 {
        cells
            .iter()
            .map(|cell| run_cell(&panel, train, cell))
            .collect()
    } else {
        // Cells are independent; distribute round-robin and reassemble in
        // cell order so the output is identical to a sequential run.
        let workers = workers.min(cells.len());
        let (tx, rx) = mpsc::channel::<(usize, AblationRow)>();
        std::thread::scope(|scope| {
            for w in 0..workers {
                let tx = tx.clone();
                let cells = &cells;
                let panel = &panel;
                scope.spawn(move || {
                    for (i, cell) in cells.iter().enumerate() {
                        if i % workers == w {
                            let row = run_cell(panel, train, cell);
                            if tx.send((i, row)).is_err() {
                                return;
                            }
                        }
                    }
                });
            }
        });
        drop(tx);
        let mut slots: Vec<Option<AblationRow>> = vec![None; cells.len()];
        for (i, row) in rx {
            slots[i] = Some(row);
        }
        slots
            .into_iter()
            .map(|r| r.expect("all cells complete"))
            .collect()
    };

    let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
    write_ablation_csv(&out_dir.join("ablation.csv"), prov, &rows)?;
    let best: Option<&AblationRow> = rows.iter().filter(|r| r.outcome.is_ok()).min_by(|a, b| {
        let ma = a
            .outcome
            .as_ref()
            .map(|r: &MetricReport| r.mape)
            .unwrap_or(f64::MAX);
        let mb = b.outcome.as_ref().map(|r| r.mape).unwrap_or(f64::MAX);
        ma.partial_cmp(&mb).unwrap()
    });
    if let Some(best) = best {
        let r = best.outcome.as_ref().unwrap();
        eprintln!(
            "{} cells done ({failed} failed); best tau={} epsilon={} filter={}: MAPE {:.2}%",
            rows.len(),
            best.cell.tau,
            best.cell.epsilon,
            best.cell.filter_on,
            r.mape * 100.0
        );
    }
    Ok(())
}
