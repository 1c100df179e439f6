//! End-to-end subcommand tests against the built binary.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_loadcast")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn read_csv_data_lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.to_string())
        .collect()
}

#[test]
fn synth_then_filter_then_group_flow() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "synth",
            "--preset",
            "two-linked-groups",
            "--days",
            "20",
            "--output-dir",
            "data",
            "--fixed-timestamp",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.path().join("data/panel.csv").exists());
    assert!(dir.path().join("data/ground_truth.json").exists());

    let truth: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("data/ground_truth.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(truth["links"].as_array().unwrap().len(), 2);

    let out = run_in(
        dir.path(),
        &[
            "filter",
            "--csv",
            "data/panel.csv",
            "--output-dir",
            "f",
            "--sigma-rel",
            "0.05",
            "--fixed-timestamp",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let lines = read_csv_data_lines(&dir.path().join("f/contribution.csv"));
    assert_eq!(
        lines[0],
        "appliance,vola,period,ctrb,selected,residual_std_after"
    );
    assert_eq!(lines.len(), 7); // header + 6 appliances

    let out = run_in(
        dir.path(),
        &[
            "group",
            "--csv",
            "data/panel.csv",
            "--output-dir",
            "g",
            "--sigma-rel",
            "0.05",
            "--epsilon",
            "0.3",
            "--fixed-timestamp",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let groups: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("g/groups.json")).unwrap())
            .unwrap();
    assert!(groups["groups"].as_array().unwrap().len() >= 2);
    assert!(dir.path().join("g/distance_matrix.csv").exists());
}

#[test]
fn train_then_predict_flow() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.json"),
        r#"{
  "data": {"kind": "preset", "name": "critical-vs-noise", "days": 12},
  "output_dir": "t",
  "train": {
    "tau": 6, "epsilon": 0.3, "hidden_dim": 4, "fc_hidden": [6],
    "epochs_stage1": 2, "epochs_stage2": 2, "buffer_len": 32, "seed": 5
  }
}"#,
    )
    .unwrap();

    let out = run_in(
        dir.path(),
        &["train", "--config", "run.json", "--fixed-timestamp"],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for file in [
        "model.ckpt",
        "history.csv",
        "metrics.csv",
        "predictions.csv",
    ] {
        assert!(dir.path().join("t").join(file).exists(), "missing {file}");
    }

    // Resolved config and seed are logged.
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("resolved config (seed 5)"), "{stderr}");

    let out = run_in(
        dir.path(),
        &[
            "predict",
            "--config",
            "run.json",
            "--checkpoint",
            "t/model.ckpt",
            "--output-dir",
            "p",
            "--fixed-timestamp",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let lines = read_csv_data_lines(&dir.path().join("p/predictions.csv"));
    assert_eq!(lines[0], "timestamp,forecast_kw,actual_kw");
    // Rolling forecasts plus the one-step-ahead row with no actual.
    assert!(lines.len() > 10);
    assert!(
        lines[lines.len() - 1].ends_with(','),
        "last row should have no actual"
    );
}

#[test]
fn provenance_headers_are_stamped() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "synth",
            "--preset",
            "periodic-vs-erratic",
            "--output-dir",
            "s",
            "--seed",
            "9",
            "--fixed-timestamp",
        ],
    );
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("s/panel.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# loadcast v"));
    assert!(lines.next().unwrap().starts_with("# config_hash: "));
    assert_eq!(lines.next().unwrap(), "# seed: 9");
    let config_line = lines.next().unwrap();
    assert!(config_line.starts_with("# config: {"), "{config_line}");
    assert!(config_line.contains("\"seed\":9"), "{config_line}");
    assert_eq!(
        lines.next().unwrap(),
        "# generated_at: 1970-01-01T00:00:00Z"
    );
    assert!(lines.next().unwrap().starts_with("timestamp,total,"));
}

#[test]
fn exit_codes_follow_the_taxonomy() {
    let dir = tempfile::tempdir().unwrap();

    // Unknown flag: usage error, exit 1.
    let out = run_in(dir.path(), &["filter", "--definitely-not-a-flag"]);
    assert_eq!(out.status.code(), Some(1));

    // No data source at all: usage error.
    let out = run_in(dir.path(), &["filter"]);
    assert_eq!(out.status.code(), Some(1));

    // Missing file: data error, exit 2.
    let out = run_in(dir.path(), &["filter", "--csv", "nope.csv"]);
    assert_eq!(out.status.code(), Some(2));

    // Bad config key: usage error.
    std::fs::write(
        dir.path().join("bad.json"),
        r#"{"data": {"kind": "csv", "path": "x"}, "oops": 1}"#,
    )
    .unwrap();
    let out = run_in(dir.path(), &["filter", "--config", "bad.json"]);
    assert_eq!(out.status.code(), Some(1));

    // Unknown preset: usage error.
    let out = run_in(dir.path(), &["synth", "--preset", "nope"]);
    assert_eq!(out.status.code(), Some(1));

    // Help exits 0.
    let out = run_in(dir.path(), &["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("Commands:"));
}

#[test]
fn ablate_completes_around_failing_cells() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("sweep.json"),
        r#"{
  "data": {"kind": "preset", "name": "critical-vs-noise", "days": 10},
  "output_dir": "a",
  "train": {
    "tau": 4, "epsilon": 0.3, "hidden_dim": 4, "fc_hidden": [6],
    "epochs_stage1": 1, "epochs_stage2": 1, "buffer_len": 16, "seed": 7
  },
  "sweep": {"taus": [3, 999], "epsilons": [0.3], "filter": [true]}
}"#,
    )
    .unwrap();

    let out = run_in(
        dir.path(),
        &[
            "ablate",
            "--config",
            "sweep.json",
            "--workers",
            "2",
            "--fixed-timestamp",
        ],
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let text = std::fs::read_to_string(dir.path().join("a/ablation.csv")).unwrap();
    let data_lines: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data_lines.len(), 3); // header + 2 cells
    assert!(
        data_lines[1].starts_with("3,0.3,true,7,0."),
        "{}",
        data_lines[1]
    );
    assert!(
        data_lines[2].starts_with("999,0.3,true,8,,,,"),
        "{}",
        data_lines[2]
    );
    assert!(text.lines().any(|l| l.starts_with("# failed: tau=999")));
}

#[test]
fn ablate_is_restartable_and_worker_count_invariant() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("sweep.json"),
        r#"{
  "data": {"kind": "preset", "name": "critical-vs-noise", "days": 10},
  "output_dir": "a",
  "train": {
    "tau": 4, "epsilon": 0.3, "hidden_dim": 4, "fc_hidden": [6],
    "epochs_stage1": 1, "epochs_stage2": 1, "buffer_len": 16, "seed": 11
  },
  "sweep": {"taus": [3, 4], "epsilons": [0.3, 0.9], "filter": [true]}
}"#,
    )
    .unwrap();

    let mut outputs = Vec::new();
    for workers in ["1", "2", "1"] {
        let out = run_in(
            dir.path(),
            &[
                "ablate",
                "--config",
                "sweep.json",
                "--workers",
                workers,
                "--fixed-timestamp",
            ],
        );
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        outputs.push(std::fs::read(dir.path().join("a/ablation.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[2], "rerun changed the sweep output");
    assert_eq!(
        outputs[0], outputs[1],
        "worker count changed the sweep output"
    );
}

#[test]
fn date_range_flags_restrict_the_panel() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "synth",
            "--preset",
            "periodic-vs-erratic",
            "--days",
            "10",
            "--output-dir",
            "d",
            "--fixed-timestamp",
        ],
    );
    assert!(out.status.success());

    let out = run_in(
        dir.path(),
        &[
            "ingest",
            "--csv",
            "d/panel.csv",
            "--output-dir",
            "slice",
            "--start",
            "2023-01-04T00:00:00Z",
            "--end",
            "2023-01-06T00:00:00Z",
            "--fixed-timestamp",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let lines = read_csv_data_lines(&dir.path().join("slice/panel.csv"));
    assert_eq!(lines.len(), 1 + 48); // header + 2 days
    assert!(lines[1].starts_with("2023-01-04T00:00:00Z"));
}
