//! Dataset loaders and the canonical panel CSV format.
//!
//! Two on-disk sources are supported:
//!
//! * UK-DALE-style appliance directories: `labels.dat` with `N name` lines
//!   and `channel_N.dat` files of `unix_ts watts` pairs at high frequency;
//!   channel 1 is the aggregate by convention.
//! * Hourly panel CSV with header `timestamp,total,<name1>,...`, values in
//!   kW, timestamps ISO-8601 or epoch seconds, empty cells masked invalid.
//!
//! Panel CSV is the canonical interchange format; every loader normalizes
//! into an [`AppliancePanel`] on a shared hourly index.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, TimeZone, Utc};
use loadcast_core::panel::{ApplianceMeta, AppliancePanel};
use loadcast_core::series::{resample_hourly, InputUnit, LoadSeries, TimeIndex, HOUR};

use crate::error::CliError;

/// Parses `labels.dat`: one `N name` pair per line.
fn read_labels(path: &Path) -> Result<BTreeMap<u32, String>, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let mut labels = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (id, name) = line.split_once(' ').ok_or_else(|| {
            CliError::data(format!(
                "{}:{}: expected 'N name'",
                path.display(),
                lineno + 1
            ))
        })?;
        let id: u32 = id.parse().map_err(|_| {
            CliError::data(format!(
                "{}:{}: bad channel number '{id}'",
                path.display(),
                lineno + 1
            ))
        })?;
        labels.insert(id, name.trim().to_string());
    }
    if labels.is_empty() {
        return Err(CliError::data(format!("{}: no labels", path.display())));
    }
    Ok(labels)
}

/// Parses a `channel_N.dat` file of `unix_ts watts` lines.
fn read_channel_file(path: &Path) -> Result<Vec<(i64, f64)>, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let bad = || {
            CliError::data(format!(
                "{}:{}: expected 'unix_ts watts'",
                path.display(),
                lineno + 1
            ))
        };
        let ts: i64 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let w: f64 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        out.push((ts, w));
    }
    if out.is_empty() {
        return Err(CliError::data(format!(
            "{}: empty channel file",
            path.display()
        )));
    }
    Ok(out)
}

/// Re-grids a series onto a target hourly index; hours the series does not
/// cover (or has masked) come out invalid.
fn align_to_index(series: &LoadSeries, index: TimeIndex) -> LoadSeries {
    let mut values = vec![0.0f64; index.len()];
    let mut mask = vec![false; index.len()];
    for i in 0..index.len() {
        if let Some(src) = series.index().position(index.timestamp(i)) {
            if let Some(v) = series.get(src) {
                values[i] = v;
                mask[i] = true;
            }
        }
    }
    LoadSeries::new(index, values, mask).expect("aligned series is valid")
}

/// Loads one UK-DALE-format house directory.
///
/// `channels` selects the appliance channels to keep; `aggregate_channel`
/// (1 by convention) provides the total load. All series are hourly means
/// restricted to the aggregate's time range.
pub fn load_ukdale_house(
    dir: &Path,
    channels: &[u32],
    aggregate_channel: u32,
) -> Result<AppliancePanel, CliError> {
    let labels = read_labels(&dir.join("labels.dat"))?;
    for &ch in channels {
        if !labels.contains_key(&ch) {
            return Err(CliError::data(format!(
                "channel {ch} not present in {}",
                dir.join("labels.dat").display()
            )));
        }
    }
    if channels.contains(&aggregate_channel) {
        return Err(CliError::usage(
            "aggregate channel cannot also be an appliance channel",
        ));
    }

    let channel_path = |ch: u32| dir.join(format!("channel_{ch}.dat"));
    let total_raw = read_channel_file(&channel_path(aggregate_channel))?;
    let total = resample_hourly(&total_raw, InputUnit::Watts)?;
    let index = *total.index();

    let mut meta = Vec::with_capacity(channels.len());
    let mut loads = Vec::with_capacity(channels.len());
    for &ch in channels {
        let raw = read_channel_file(&channel_path(ch))?;
        let series = resample_hourly(&raw, InputUnit::Watts)?;
        meta.push(ApplianceMeta {
            id: ch,
            name: labels[&ch].clone(),
        });
        loads.push(align_to_index(&series, index));
    }

    Ok(AppliancePanel::new(meta, loads, total)?)
}

/// Accepts epoch seconds, RFC 3339, or a bare `YYYY-MM-DD(T| )HH:MM:SS`.
pub fn parse_timestamp(s: &str) -> Result<i64, CliError> {
    if let Ok(epoch) = s.parse::<i64>() {
        return Ok(epoch);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Ok(dt.timestamp());
    }
    if let Ok(naive) = chrono::NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S") {
        return Ok(naive.and_utc().timestamp());
    }
    if let Ok(naive) = chrono::NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S") {
        return Ok(naive.and_utc().timestamp());
    }
    Err(CliError::data(format!("unparseable timestamp '{s}'")))
}

/// Formats epoch-seconds as RFC 3339 UTC.
pub fn format_timestamp(ts: i64) -> String {
    Utc.timestamp_opt(ts, 0)
        .single()
        .map(|dt| dt.format("%Y-%m-%dT%H:%M:%SZ").to_string())
        .unwrap_or_else(|| ts.to_string())
}

/// Loads the canonical hourly panel CSV.
pub fn load_csv_panel(path: &Path) -> Result<AppliancePanel, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;

    let headers = reader.headers()?.clone();
    if headers.len() < 2 || &headers[0] != "timestamp" || &headers[1] != "total" {
        return Err(CliError::data(format!(
            "{}: header must start with 'timestamp,total'",
            path.display()
        )));
    }
    let names: Vec<String> = headers.iter().skip(2).map(|s| s.to_string()).collect();

    let mut timestamps: Vec<i64> = Vec::new();
    let mut columns: Vec<(Vec<f64>, Vec<bool>)> = vec![(Vec::new(), Vec::new()); names.len() + 1];
    for (rowno, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(CliError::data(format!(
                "{}: row {} has {} fields, expected {}",
                path.display(),
                rowno + 2,
                record.len(),
                headers.len()
            )));
        }
        let ts = parse_timestamp(&record[0])?;
        if let Some(&last) = timestamps.last() {
            if ts == last {
                return Err(CliError::data(format!(
                    "{}: duplicate timestamp at row {}",
                    path.display(),
                    rowno + 2
                )));
            }
            if ts - last != HOUR {
                return Err(CliError::data(format!(
                    "{}: non-hourly spacing ({} s) at row {}",
                    path.display(),
                    ts - last,
                    rowno + 2
                )));
            }
        }
        timestamps.push(ts);
        for (c, col) in columns.iter_mut().enumerate() {
            let cell = &record[c + 1];
            if cell.is_empty() {
                col.0.push(0.0);
                col.1.push(false);
            } else {
                let v: f64 = cell.parse().map_err(|_| {
                    CliError::data(format!(
                        "{}: bad number '{cell}' at row {}",
                        path.display(),
                        rowno + 2
                    ))
                })?;
                col.0.push(v);
                col.1.push(true);
            }
        }
    }
    if timestamps.is_empty() {
        return Err(CliError::data(format!("{}: no data rows", path.display())));
    }

    let index = TimeIndex::hourly(timestamps[0], timestamps.len());
    let mut cols = columns.into_iter();
    let (tv, tm) = cols.next().unwrap();
    let total = LoadSeries::new(index, tv, tm)
        .map_err(|e| CliError::data(format!("{}: total column: {e}", path.display())))?;
    let mut meta = Vec::with_capacity(names.len());
    let mut loads = Vec::with_capacity(names.len());
    for (i, ((v, m), name)) in cols.zip(names).enumerate() {
        meta.push(ApplianceMeta {
            id: i as u32 + 2,
            name: name.clone(),
        });
        loads
            .push(LoadSeries::new(index, v, m).map_err(|e| {
                CliError::data(format!("{}: column '{name}': {e}", path.display()))
            })?);
    }
    Ok(AppliancePanel::new(meta, loads, total)?)
}

/// Writes the canonical panel CSV, preceded by the given `# ` header lines.
pub fn write_csv_panel(
    path: &Path,
    panel: &AppliancePanel,
    header_lines: &[String],
) -> Result<(), CliError> {
    let mut file = fs::File::create(path)?;
    for line in header_lines {
        writeln!(file, "{line}")?;
    }
    let mut w = csv::Writer::from_writer(file);

    let mut header = vec!["timestamp".to_string(), "total".to_string()];
    header.extend(panel.meta().iter().map(|m| m.name.clone()));
    w.write_record(&header)?;

    let fmt = |s: &LoadSeries, t: usize| -> String {
        match s.get(t) {
            Some(v) => format!("{v}"),
            None => String::new(),
        }
    };
    for t in 0..panel.len() {
        let mut row = vec![format_timestamp(panel.index().timestamp(t))];
        row.push(fmt(panel.total_load(), t));
        for s in panel.appliance_loads() {
            row.push(fmt(s, t));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use loadcast_core::synth::{generate_household, preset_by_name};

    #[test]
    fn ukdale_layout_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("labels.dat"),
            "1 aggregate\n5 fridge\n6 kettle\n",
        )
        .unwrap();

        // 3 hours of 6-second samples; kettle pulls 2 kW in hour 1 only.
        let mut agg = String::new();
        let mut fridge = String::new();
        let mut kettle = String::new();
        for i in 0..1800 {
            let ts = 1_800_000_000 + i * 6;
            let hour = i / 600;
            let f = 100.0;
            let k = if hour == 1 { 2000.0 } else { 0.0 };
            agg.push_str(&format!("{ts} {}\n", f + k + 50.0));
            fridge.push_str(&format!("{ts} {f}\n"));
            kettle.push_str(&format!("{ts} {k}\n"));
        }
        std::fs::write(dir.path().join("channel_1.dat"), agg).unwrap();
        std::fs::write(dir.path().join("channel_5.dat"), fridge).unwrap();
        std::fs::write(dir.path().join("channel_6.dat"), kettle).unwrap();

        let panel = load_ukdale_house(dir.path(), &[5, 6], 1).unwrap();
        assert_eq!(panel.appliance_count(), 2);
        assert_eq!(panel.meta()[0].name, "fridge");
        assert_eq!(panel.len(), 3);
        assert!((panel.appliance_loads()[0].values()[0] - 0.1).abs() < 1e-12);
        assert!((panel.appliance_loads()[1].values()[1] - 2.0).abs() < 1e-12);
        assert_eq!(panel.violations(), 0);

        // Single requested channel.
        let single = load_ukdale_house(dir.path(), &[5], 1).unwrap();
        assert_eq!(single.appliance_count(), 1);
        assert_eq!(single.meta()[0].name, "fridge");
    }

    #[test]
    fn ukdale_missing_pieces_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_ukdale_house(dir.path(), &[5], 1).is_err());

        std::fs::write(dir.path().join("labels.dat"), "1 aggregate\n5 fridge\n").unwrap();
        std::fs::write(dir.path().join("channel_1.dat"), "1600000000 100\n").unwrap();
        std::fs::write(dir.path().join("channel_5.dat"), "").unwrap();
        let err = load_ukdale_house(dir.path(), &[5], 1).unwrap_err();
        assert!(err.to_string().contains("empty channel file"), "{err}");

        // Requested channel absent from labels.
        let err = load_ukdale_house(dir.path(), &[9], 1).unwrap_err();
        assert!(err.to_string().contains("channel 9"), "{err}");
    }

    #[test]
    fn ukdale_sum_violations_are_masked_and_counted() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("labels.dat"), "1 aggregate\n5 a\n6 b\n").unwrap();
        let mut agg = String::new();
        let mut a = String::new();
        let mut b = String::new();
        for i in 0..1200 {
            let ts = 1_800_000_000 + i * 6;
            let hour = i / 600;
            // Hour 1: appliances sum to 900 W but aggregate reads 500 W.
            let (av, bv, total) = if hour == 1 {
                (400.0, 500.0, 500.0)
            } else {
                (100.0, 100.0, 300.0)
            };
            agg.push_str(&format!("{ts} {total}\n"));
            a.push_str(&format!("{ts} {av}\n"));
            b.push_str(&format!("{ts} {bv}\n"));
        }
        std::fs::write(dir.path().join("channel_1.dat"), agg).unwrap();
        std::fs::write(dir.path().join("channel_5.dat"), a).unwrap();
        std::fs::write(dir.path().join("channel_6.dat"), b).unwrap();

        let panel = load_ukdale_house(dir.path(), &[5, 6], 1).unwrap();
        assert_eq!(panel.violations(), 1);
        assert!(!panel.total_load().is_valid(1));
        assert!(panel.total_load().is_valid(0));
    }

    #[test]
    fn csv_round_trip_preserves_values_and_masks() {
        let spec = preset_by_name("periodic-vs-erratic").unwrap();
        let (panel, _) = generate_household(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("panel.csv");
        write_csv_panel(&path, &panel, &["# test".to_string()]).unwrap();
        let loaded = load_csv_panel(&path).unwrap();

        assert_eq!(loaded.len(), panel.len());
        assert_eq!(loaded.appliance_count(), panel.appliance_count());
        assert_eq!(loaded.index().start(), panel.index().start());
        for t in 0..panel.len() {
            assert_eq!(loaded.total_load().get(t), panel.total_load().get(t));
            for (a, b) in loaded.appliance_loads().iter().zip(panel.appliance_loads()) {
                match (a.get(t), b.get(t)) {
                    (Some(x), Some(y)) => assert!((x - y).abs() < 1e-9),
                    (None, None) => {}
                    other => panic!("mask mismatch at {t}: {other:?}"),
                }
            }
        }
    }

    #[test]
    fn csv_with_masked_cell_round_trips_the_mask() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("panel.csv");
        std::fs::write(
            &path,
            "timestamp,total,fridge\n\
             2024-01-01T00:00:00Z,1.5,0.25\n\
             2024-01-01T01:00:00Z,1.25,\n\
             2024-01-01T02:00:00Z,1.0,0.3\n",
        )
        .unwrap();
        let panel = load_csv_panel(&path).unwrap();
        assert_eq!(panel.len(), 3);
        assert!(panel.total_load().is_valid(1));
        assert!(!panel.appliance_loads()[0].is_valid(1));

        let out = dir.path().join("copy.csv");
        write_csv_panel(&out, &panel, &[]).unwrap();
        let again = load_csv_panel(&out).unwrap();
        assert!(!again.appliance_loads()[0].is_valid(1));
        assert_eq!(again.appliance_loads()[0].get(2), Some(0.3));
    }

    #[test]
    fn csv_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");

        std::fs::write(&p, "timestamp,fridge\n2024-01-01T00:00:00Z,1\n").unwrap();
        assert!(load_csv_panel(&p)
            .unwrap_err()
            .to_string()
            .contains("timestamp,total"));

        std::fs::write(
            &p,
            "timestamp,total\n2024-01-01T00:00:00Z,1\n2024-01-01T02:00:00Z,1\n",
        )
        .unwrap();
        assert!(load_csv_panel(&p)
            .unwrap_err()
            .to_string()
            .contains("non-hourly"));

        std::fs::write(
            &p,
            "timestamp,total\n2024-01-01T00:00:00Z,1\n2024-01-01T00:00:00Z,1\n",
        )
        .unwrap();
        assert!(load_csv_panel(&p)
            .unwrap_err()
            .to_string()
            .contains("duplicate"));
    }

    #[test]
    fn epoch_timestamps_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("epoch.csv");
        std::fs::write(&p, "timestamp,total\n3600,1.0\n7200,2.0\n").unwrap();
        let panel = load_csv_panel(&p).unwrap();
        assert_eq!(panel.index().start(), 3600);
    }
}
