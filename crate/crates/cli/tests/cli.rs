use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mdfn(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mdfn"))
        .args(args)
        .current_dir(dir)
        .env_remove("MDFN_OUT_DIR")
        .output()
        .expect("spawn mdfn")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Reads a CSV strictly and returns header plus rows.
fn read_csv(path: &Path) -> (Vec<String>, Vec<csv::StringRecord>) {
    let mut r = csv::ReaderBuilder::new()
        .flexible(false)
        .from_path(path)
        .unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().collect::<Result<Vec<_>, _>>().unwrap();
    (header, rows)
}

fn column(header: &[String], rows: &[csv::StringRecord], name: &str) -> Vec<String> {
    let k = header
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("no column {name} in {header:?}"));
    rows.iter().map(|r| r[k].to_string()).collect()
}

fn summary_json(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = mdfn(&["simulate", "--no-such-flag"], dir.path());
    assert_eq!(code(&o), 2);
    let o = mdfn(&["simulate", "--direction", "sideways"], dir.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn empty_config_lists_required_sections() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("empty.toml"), "").unwrap();
    let o = mdfn(&["simulate", "--config", "empty.toml"], dir.path());
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("[design]"), "{}", stderr(&o));
}

#[test]
fn unknown_key_reports_line_and_field() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("c.toml"),
        "[design]\npreset = \"default-bilayer\"\nthickness = 3\n",
    )
    .unwrap();
    let o = mdfn(&["check", "--config", "c.toml"], dir.path());
    assert_eq!(code(&o), 3);
    let e = stderr(&o);
    assert!(e.contains("line 3") && e.contains("thickness"), "{e}");
}

#[test]
fn physical_violation_names_the_constraint() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[design]\npreset = \"default-bilayer\"\n\n[[design.overrides]]\nparam = { layer = 1, field = \"eps_cbd\" }\nvalue = 0.9\n";
    fs::write(dir.path().join("c.toml"), text).unwrap();
    let o = mdfn(&["check", "--config", "c.toml"], dir.path());
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("eps_e + eps_cbd < 1"), "{}", stderr(&o));
}

#[test]
fn missing_config_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = mdfn(&["simulate", "--config", "nope.toml"], dir.path());
    assert_eq!(code(&o), 1);
}

#[test]
fn check_output_reparses_to_the_same_hash() {
    let dir = tempfile::tempdir().unwrap();
    let o = mdfn(
        &[
            "check",
            "--preset",
            "optimal-bilayer",
            "--snapshot-count",
            "5",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    fs::write(dir.path().join("round.toml"), &text).unwrap();
    let again = mdfn(&["check", "--config", "round.toml"], dir.path());
    assert_eq!(code(&again), 0);
    assert_eq!(String::from_utf8(again.stdout).unwrap(), text);
}

#[test]
fn simulate_3c_writes_a_complete_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let o = mdfn(
        &[
            "simulate",
            "--preset",
            "default-bilayer",
            "--c-rate",
            "3",
            "--out",
            "run",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let run = dir.path().join("run");
    let json = summary_json(&run);
    let hash = json["metadata"]["config_hash"]
        .as_str()
        .unwrap()
        .to_string();
    assert!(json["metadata"]["tool_version"].is_string());
    assert!(json["metadata"]["timestamp_unix"].is_u64());
    let achieved = json["summary"]["run"]["capacity_mah_cm2"].as_f64().unwrap();
    assert!((achieved - 3.19).abs() <= 0.05 * 3.19, "{achieved}");

    for name in [
        "series.csv",
        "fields.csv",
        "probes.csv",
        "steps.csv",
        "summary.csv",
    ] {
        let (header, rows) = read_csv(&run.join(name));
        assert_eq!(header[0], "config_hash", "{name}");
        assert!(!rows.is_empty(), "{name}");
        assert!(
            column(&header, &rows, "config_hash")
                .iter()
                .all(|h| *h == hash),
            "{name}"
        );
    }
    let (header, rows) = read_csv(&run.join("series.csv"));
    for col in ["time_s", "voltage_v", "current_a", "capacity_mah_cm2"] {
        for v in column(&header, &rows, col) {
            v.parse::<f64>().unwrap_or_else(|_| panic!("{col}: {v}"));
        }
    }
    let (header, rows) = read_csv(&run.join("probes.csv"));
    let probes = column(&header, &rows, "probe");
    for p in ["sep", "mid", "cc"] {
        assert!(probes.iter().any(|q| q == p));
    }
    // Spaced over the nominal 1C/3 duration; cutoff comes at about 85% of it.
    let snapshots: std::collections::BTreeSet<String> =
        column(&header, &rows, "snapshot").into_iter().collect();
    assert!((15..=22).contains(&snapshots.len()), "{}", snapshots.len());
    assert!(fs::read_to_string(run.join("config.toml"))
        .unwrap()
        .contains(&hash));
    assert!(fs::read_to_string(run.join("diagnostics.log"))
        .unwrap()
        .contains("Cutoff"));
}

#[test]
fn simulate_at_the_specific_capacity_rate() {
    let dir = tempfile::tempdir().unwrap();
    let o = mdfn(
        &[
            "simulate",
            "--c-rate",
            "0.05",
            "--snapshot-count",
            "0",
            "--out",
            "run",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (header, rows) = read_csv(&dir.path().join("run/summary.csv"));
    let specific: f64 = column(&header, &rows, "specific_capacity_mah_cm2")[0]
        .parse()
        .unwrap();
    assert!((specific - 3.74).abs() <= 0.02 * 3.74, "{specific}");
    let retention: f64 = column(&header, &rows, "retention_percent")[0]
        .parse()
        .unwrap();
    assert!((retention - 100.0).abs() < 1e-9);
}

#[test]
fn output_directory_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_mdfn"))
        .args([
            "simulate",
            "--preset",
            "nmc-only-72um",
            "--c-rate",
            "5",
            "--snapshot-count",
            "0",
        ])
        .current_dir(dir.path())
        .env("MDFN_OUT_DIR", "from-env")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(dir.path().join("from-env/summary.json").exists());
}

#[test]
fn solver_failure_has_its_own_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("c.toml"),
        "[design]\npreset = \"default-bilayer\"\n\n[solver]\nmax_newton_iter = 1\n",
    )
    .unwrap();
    let o = mdfn(
        &["simulate", "--config", "c.toml", "--out", "run"],
        dir.path(),
    );
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("solver error"), "{}", stderr(&o));
    let json = summary_json(&dir.path().join("run"));
    assert_eq!(json["summary"]["run"]["status"], "solver");
}

#[test]
fn unreachable_target_is_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let o = mdfn(
        &["benchmark", "--target", "100", "--out", "run"],
        dir.path(),
    );
    assert_eq!(code(&o), 5, "{}", stderr(&o));
    let (header, rows) = read_csv(&dir.path().join("run/benchmark.csv"));
    assert!(column(&header, &rows, "status")
        .iter()
        .all(|s| s == "infeasible"));
}

#[test]
fn benchmark_orders_the_default_set() {
    let dir = tempfile::tempdir().unwrap();
    let o = mdfn(
        &[
            "benchmark",
            "--target",
            "3.74",
            "--c-rate",
            "3",
            "--out",
            "run",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (header, rows) = read_csv(&dir.path().join("run/benchmark.csv"));
    let designs = column(&header, &rows, "design");
    assert_eq!(
        designs,
        ["default-bilayer", "nmc-only-72um", "lfp-only-113um"]
    );
    let specific: Vec<f64> = column(&header, &rows, "specific_capacity_mah_cm2")
        .iter()
        .map(|v| v.parse().unwrap())
        .collect();
    assert!(
        specific.iter().all(|s| (s - 3.74).abs() <= 0.01 * 3.74),
        "{specific:?}"
    );
    let retention: Vec<f64> = column(&header, &rows, "retention_percent")
        .iter()
        .map(|v| v.parse().unwrap())
        .collect();
    assert!(
        retention[0] > retention[1] && retention[1] > retention[2],
        "{retention:?}"
    );
    for (r, expected) in retention.iter().zip([85.4, 76.9, 69.5]) {
        assert!((r - expected).abs() <= 3.0, "{r} vs {expected}");
    }
}

#[test]
fn cycle_preset_with_slow_discharge_recovers_capacity() {
    let dir = tempfile::tempdir().unwrap();
    let o = mdfn(
        &[
            "cycle",
            "--protocol",
            "3c-01c-3c",
            "--snapshot-count",
            "1",
            "--out",
            "run",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let json = summary_json(&dir.path().join("run"));
    let caps: Vec<f64> = json["summary"]["charge_capacities_mah_cm2"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert_eq!(caps.len(), 2);
    assert!((caps[1] - caps[0]).abs() <= 0.01 * caps[0], "{caps:?}");
    let (header, rows) = read_csv(&dir.path().join("run/steps.csv"));
    assert_eq!(
        column(&header, &rows, "mode"),
        ["cc-charge", "cc-discharge", "cc-charge"]
    );
}

#[test]
fn sweep_needs_a_kind() {
    let dir = tempfile::tempdir().unwrap();
    let o = mdfn(&["sweep"], dir.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn rate_curve_sweep_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[design]\npreset = \"nmc-only-72um\"\n\n[study]\nkind = \"crate-curve\"\nrates = [0.5, 2.0, 4.0]\n\n[output]\ndirectory = \"curve\"\n";
    fs::write(dir.path().join("c.toml"), text).unwrap();
    let o = mdfn(
        &["sweep", "--config", "c.toml", "--threads", "1"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (header, rows) = read_csv(&dir.path().join("curve/sweep.csv"));
    let caps: Vec<f64> = column(&header, &rows, "capacity_mah_cm2")
        .iter()
        .map(|v| v.parse().unwrap())
        .collect();
    assert!(caps[0] > caps[1] && caps[1] > caps[2], "{caps:?}");
    assert_eq!(column(&header, &rows, "normalized")[0], "1.0");
}

#[test]
fn presets_are_listed() {
    let dir = tempfile::tempdir().unwrap();
    let o = mdfn(&["presets"], dir.path());
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    for name in [
        "default-bilayer",
        "optimal-bilayer",
        "nmc-only-89.2um",
        "3c-01c-3c",
    ] {
        assert!(text.contains(name));
    }
}
