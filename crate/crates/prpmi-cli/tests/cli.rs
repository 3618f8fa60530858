//! End-to-end tests of the command-line interface.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn prpmi(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prpmi"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write_tiny_instance(path: &Path) {
    let mut morning = vec![0.0; 24];
    morning[8] = 80.0;
    morning[15] = 60.0;
    let mut small = vec![0.0; 24];
    small[8] = 50.0;
    small[15] = 30.0;
    let instance = serde_json::json!({
        "horizon": 2,
        "storage_capacity": 300.0,
        "cost": {
            "transport_per_unit": 2.25,
            "dissatisfaction_per_kg": 12.0,
            "dissatisfaction_fixed": 1500.0
        },
        "transport": {
            "travel_time": [[2.0, 4.0]],
            "load_plus_swap_overhead": 1.0,
            "depart_hour": 8
        },
        "sources": [
            {"id": 0, "refill_capacity": 400.0, "refill_price": 8.0,
             "slot_limit": 2, "initial_storages": [250.0, 100.0]}
        ],
        "destinations": [
            {"id": 0, "hourly_demand": [morning, morning], "initial_stock": 90.0},
            {"id": 1, "hourly_demand": [small, small], "initial_stock": 80.0}
        ]
    });
    std::fs::write(path, serde_json::to_string_pretty(&instance).unwrap()).unwrap();
}

#[test]
fn generate_writes_a_valid_reproducible_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = prpmi(&["generate", "--sources", "3", "--seed", "7", "-o", "i.json"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let first = std::fs::read(dir.path().join("i.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(parsed["horizon"], 7);

    // Same flags, same bytes.
    let out = prpmi(&["generate", "--sources", "3", "--seed", "7", "-o", "j.json"], dir.path());
    assert!(out.status.success());
    let second = std::fs::read(dir.path().join("j.json")).unwrap();
    assert_eq!(first, second);
}

#[test]
fn generate_rejects_out_of_range_sources() {
    let dir = tempfile::tempdir().unwrap();
    let out = prpmi(&["generate", "--sources", "9", "-o", "x.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("x.json").exists());
}

#[test]
fn solve_gh_writes_plans_for_every_storage() {
    let dir = tempfile::tempdir().unwrap();
    write_tiny_instance(&dir.path().join("tiny.json"));
    let out = prpmi(
        &["solve", "tiny.json", "--method", "gh", "--limit", "5", "--outdir", "run"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let plans = std::fs::read_to_string(dir.path().join("run/plans.csv")).unwrap();
    let mut lines = plans.lines();
    assert_eq!(lines.next().unwrap(), "storage_id,time,location,carried_kg");
    // 4 storages, horizon 2: one row per storage and time index.
    assert_eq!(lines.count(), 4 * 5);
    let ids: std::collections::BTreeSet<&str> = plans
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(ids.len(), 4);
}

#[test]
fn solve_ma_cost_matches_recomputation_and_rh_prints_bound() {
    let dir = tempfile::tempdir().unwrap();
    write_tiny_instance(&dir.path().join("tiny.json"));
    for method in ["ma", "rh"] {
        let out = prpmi(
            &["solve", "tiny.json", "--method", method, "--limit", "10", "--outdir", method],
            dir.path(),
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let report: serde_json::Value =
            serde_json::from_slice(&out.stdout).expect("stdout is the report");
        let cost = &report["cost"];
        let total = cost["total"].as_f64().unwrap();
        let sum = cost["transport"].as_f64().unwrap()
            + cost["refill"].as_f64().unwrap()
            + cost["variable_dissatisfaction"].as_f64().unwrap()
            + cost["fixed_dissatisfaction"].as_f64().unwrap();
        assert!((total - sum).abs() < 1e-9);
        let bound = report["bound"].as_f64().unwrap();
        assert!(bound <= total + 1e-6, "{method}: bound {bound} vs total {total}");
        // The written report matches stdout.
        let on_disk: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join(method).join("solution.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(&on_disk, &report);
    }
}

#[test]
fn solve_requires_a_method() {
    let dir = tempfile::tempdir().unwrap();
    write_tiny_instance(&dir.path().join("tiny.json"));
    let out = prpmi(&["solve", "tiny.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn solve_rejects_invalid_instance_files() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("broken.json"), "{\"horizon\": 1}").unwrap();
    let out = prpmi(&["solve", "broken.json", "--method", "gh"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("storage_capacity"), "{stderr}");
}

#[test]
fn solve_with_external_stub_solver() {
    let dir = tempfile::tempdir().unwrap();
    write_tiny_instance(&dir.path().join("tiny.json"));
    // A stub that ignores the model and answers nonsense is rejected.
    let stub = dir.path().join("stub.sh");
    prpmi_write_stub(&stub, "y_d0_R0 0\n");
    let out = prpmi(
        &[
            "solve",
            "tiny.json",
            "--method",
            "ma",
            "--solver-command",
            stub.to_str().unwrap(),
            "--outdir",
            "ext",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3));
}

fn prpmi_write_stub(path: &Path, solution: &str) {
    let script = format!(
        "#!/bin/sh\nwhile [ $# -gt 0 ]; do\n  if [ \"$1\" = \"--sol\" ]; then SOL=\"$2\"; shift; fi\n  shift\ndone\nprintf '%s' '{solution}' > \"$SOL\"\n"
    );
    std::fs::write(path, script).unwrap();
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        std::fs::set_permissions(path, std::fs::Permissions::from_mode(0o755)).unwrap();
    }
}

#[test]
fn bench_produces_the_documented_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = prpmi(
        &[
            "bench", "--count", "8", "--limit", "0.02", "--methods", "gh,rh", "--seed", "3",
            "--workers", "2", "--outdir", "b",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let records = std::fs::read_to_string(dir.path().join("b/records.csv")).unwrap();
    let mut lines = records.lines();
    assert_eq!(
        lines.next().unwrap(),
        "instance_id,method,cost,bound,gap,runtime_s,q_destination,s_demand,status"
    );
    assert_eq!(lines.count(), 16);
    let summary = std::fs::read_to_string(dir.path().join("b/summary.csv")).unwrap();
    assert!(summary.starts_with("metric,group,method,n,median,mean,q1,q3"));
    let boxplot = std::fs::read_to_string(dir.path().join("b/boxplot.csv")).unwrap();
    assert!(boxplot.starts_with("method,group,median,mean,q1,q3,lo_whisker,hi_whisker,outliers"));
}

/// Acceptance criterion 7 at the binary boundary: identical seeds and limits
/// give byte-identical records.csv.
#[test]
fn bench_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &str| {
        let output = prpmi(
            &[
                "bench", "--count", "4", "--limit", "0.05", "--methods", "gh", "--seed", "11",
                "--workers", "2", "--outdir", out,
            ],
            dir.path(),
        );
        assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
        std::fs::read(dir.path().join(out).join("records.csv")).unwrap()
    };
    let first = run("a");
    let second = run("b");
    assert_eq!(first, second);
    println!("[acceptance] criterion 7 (cli): PASS - {} identical bytes", first.len());
}

#[test]
fn bench_requires_methods() {
    let dir = tempfile::tempdir().unwrap();
    let out = prpmi(&["bench", "--count", "4"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn version_announces_the_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out = prpmi(&["--version"], dir.path());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("prpmi"), "{text}");
    assert!(text.contains("model schema 1"), "{text}");
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    write_tiny_instance(&dir.path().join("tiny.json"));
    std::fs::write(dir.path().join("cfg.toml"), "limit = 5.0\noutdir = \"from_config\"\n").unwrap();
    let out = prpmi(
        &["solve", "tiny.json", "--method", "gh", "--config", "cfg.toml"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("from_config/solution.json").exists());
}
