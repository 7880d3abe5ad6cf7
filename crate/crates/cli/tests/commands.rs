use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn antijam(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_antijam"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stderr_report(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).expect("JSON error report on stderr")
}

fn canonical_file(dir: &Path) -> String {
    let out = antijam(&["canonical", "--out", "canon"], dir);
    assert!(out.status.success());
    dir.join("canon/scenario.json").display().to_string()
}

#[test]
fn heatmap_has_one_row_per_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let scen = canonical_file(dir.path());
    let out = antijam(
        &[
            "heatmap",
            "--scenario",
            &scen,
            "--variant",
            "proposed",
            "--grid-step",
            "10",
            "--out",
            "h",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(dir.path().join("h/heatmap.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("x_m,y_m,rmse_m"));
    assert_eq!(lines.count(), 2601);
    assert!(!csv.contains('\r'));
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("h/manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "heatmap");
    assert_eq!(manifest["seed"], 0);
    assert_eq!(manifest["scenario_sha256"].as_str().unwrap().len(), 64);
    assert!(manifest["scenario"]["grs"].is_array());
}

#[test]
fn validate_accepts_canonical_file() {
    let dir = tempfile::tempdir().unwrap();
    let scen = canonical_file(dir.path());
    let before = fs::read(&scen).unwrap();
    let out = antijam(&["validate", "--scenario", &scen], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(fs::read(&scen).unwrap(), before);
}

#[test]
fn validate_names_the_violated_constraint() {
    let dir = tempfile::tempdir().unwrap();
    let scen = canonical_file(dir.path());
    let mut doc: Value = serde_json::from_str(&fs::read_to_string(&scen).unwrap()).unwrap();
    doc["grs"][0]["position"]["horizontal"] = serde_json::json!([100.0, 0.0]);
    let bad = dir.path().join("bad.json");
    fs::write(&bad, serde_json::to_string_pretty(&doc).unwrap()).unwrap();
    let out = antijam(
        &["validate", "--scenario", bad.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3));
    let report = stderr_report(&out);
    assert_eq!(report["error"], "validation");
    assert!(report["violations"][0]
        .as_str()
        .unwrap()
        .contains("inside jamming area"));

    // other commands refuse the same file with the same code
    let out = antijam(
        &["crlb", "--scenario", bad.to_str().unwrap(), "--out", "c"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn unreadable_or_malformed_scenarios_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = antijam(&["validate", "--scenario", "missing.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_report(&out)["error"], "parse");
    fs::write(dir.path().join("junk.json"), "{\"jammer\": 3}").unwrap();
    let out = antijam(&["heatmap", "--scenario", "junk.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn singular_bound_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let scen = canonical_file(dir.path());
    let mut doc: Value = serde_json::from_str(&fs::read_to_string(&scen).unwrap()).unwrap();
    doc["grs"].as_array_mut().unwrap().truncate(2);
    let two = dir.path().join("two.json");
    fs::write(&two, doc.to_string()).unwrap();
    let out = antijam(
        &[
            "crlb",
            "--scenario",
            "two.json",
            "--variant",
            "no-v2v",
            "--out",
            "c",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(4));
    let report = stderr_report(&out);
    assert_eq!(report["error"], "numerical");
    assert!(report["message"].as_str().unwrap().contains("singular"));
}

#[test]
fn identical_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let runs = [
        vec!["heatmap", "--grid-step", "25", "--j2v", "nlos"],
        vec!["coverage", "--variant", "conventional", "--grid-step", "25"],
        vec![
            "sweep-uav-sjr",
            "--grid-step",
            "50",
            "--sjr-start",
            "5",
            "--sjr-stop",
            "15",
        ],
        vec!["monte-carlo", "--trials", "120", "--seed", "9"],
        vec!["measurements", "--seed", "4"],
    ];
    for (k, args) in runs.iter().enumerate() {
        let mut read = Vec::new();
        for rep in 0..2 {
            let out_dir = format!("run{k}_{rep}");
            let mut a = args.clone();
            a.extend(["--out", out_dir.as_str()]);
            let out = antijam(&a, dir.path());
            assert!(
                out.status.success(),
                "{args:?}: {}",
                String::from_utf8_lossy(&out.stderr)
            );
            let mut files: Vec<_> = fs::read_dir(dir.path().join(&out_dir))
                .unwrap()
                .map(|e| e.unwrap().path())
                .collect();
            files.sort();
            read.push(
                files
                    .iter()
                    .map(|f| fs::read(f).unwrap())
                    .collect::<Vec<_>>(),
            );
        }
        assert_eq!(read[0], read[1], "{args:?}");
    }
}

#[test]
fn sweep_and_energy_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = antijam(
        &[
            "sweep-grs-sjr",
            "--grid-step",
            "50",
            "--sjr-start",
            "5",
            "--sjr-stop",
            "10",
            "--out",
            "s",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let csv = fs::read_to_string(dir.path().join("s/sweep_grs_sjr.csv")).unwrap();
    assert!(csv.starts_with("sjr_db,metric,value\n"));
    assert!(csv.contains("\n10,no-v2v.max_uav_error_m,"));
    assert!(csv.contains("\n5,conventional.coverage_90_m,"));

    let out = antijam(
        &["energy-power", "--grid-step", "50", "--out", "e"],
        dir.path(),
    );
    assert!(out.status.success());
    let r: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("e/energy_power.json")).unwrap())
            .unwrap();
    assert!(r["power_dbm"].as_f64().unwrap() >= 20.0);

    let out = antijam(
        &["crlb", "--variant", "conventional", "--out", "x"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}
