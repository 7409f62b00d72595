use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lidar_layout::milp::read_lp_file;

fn bin(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lidar-layout")).args(args).arg("--out-dir").arg(out).output().expect("binary runs")
}

fn data(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "tests", "data", name].iter().collect();
    p.to_str().unwrap().to_string()
}

fn case() -> String {
    format!("{}/examples/case_2x2.json", env!("CARGO_MANIFEST_DIR"))
}

/// The 2x2 case with edits applied to its JSON, written into `dir`.
fn edited_case(dir: &Path, edit: impl FnOnce(&mut serde_json::Value)) -> String {
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(case()).unwrap()).unwrap();
    edit(&mut v);
    let path = dir.join("edited.json");
    fs::write(&path, v.to_string()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn evaluate_echoes_the_configured_poses() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&["evaluate", &case()], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    let poses = report["config"].as_array().unwrap();
    let xyz = |i: usize| ["x", "y", "z"].map(|k| poses[i][k].as_f64().unwrap());
    assert_eq!(xyz(0), [4.335641, -0.777785, 0.696529]);
    assert_eq!(xyz(1), [-4.335641, 1.893497, -0.696529]);
    assert!(report["objective"].as_u64().is_some());
    let csv = fs::read_to_string(dir.path().join("cubes.csv")).unwrap();
    assert!(csv.starts_with("x,y,z,shell,subspace\n"));
    assert_eq!(csv.lines().count(), 1 + 34 * 10 * 10);
}

#[test]
fn one_cube_roi_dumps_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&["evaluate", &data("minimal.json")], dir.path());
    assert!(out.status.success());
    let csv = fs::read_to_string(dir.path().join("cubes.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn malformed_json_exits_2_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{ \"version\": 1,\n  \"fleet\": [ }").unwrap();
    let out = bin(&["evaluate", bad.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn invalid_values_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = edited_case(dir.path(), |v| v["roi"]["cube_edge"] = (-1.0).into());
    let out = bin(&["evaluate", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cube_edge"));
}

#[test]
fn missing_config_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&["evaluate", "/nonexistent/case.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn export_with_searchable_angles_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = edited_case(dir.path(), |v| v["search"]["optimize_angles"] = true.into());
    let out = bin(&["export-milp", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("fixed mount angles"));
    assert!(!dir.path().join("model.lp").exists());
}

#[test]
fn export_rejects_exact_mode() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&["export-milp", &data("minimal.json"), "--mode", "exact"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn minimal_export_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&["export-milp", &data("minimal.json")], dir.path());
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("variables: 16") && stdout.contains("constraints: 24"), "{stdout}");
    let got = fs::read_to_string(dir.path().join("model.lp")).unwrap();
    assert_eq!(got, fs::read_to_string(data("minimal.lp")).unwrap());
    assert_eq!(read_lp_file(&dir.path().join("model.lp")).unwrap().variables.len(), 16);
}

#[test]
fn optimize_trace_and_fixed_angles() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = edited_case(dir.path(), |v| {
        v["search"]["iterations"] = 300.into();
        v["poses"][0]["pitch_deg"] = 3.0.into();
        v["poses"][1]["roll_deg"] = (-2.0).into();
    });
    let out = bin(&["optimize", &cfg, "--seed", "5"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let mut rdr = csv::Reader::from_path(dir.path().join("trace.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["start", "iteration", "best_objective"]);
    let rows: Vec<(usize, usize, usize)> = rdr.deserialize().map(|r| r.unwrap()).collect();
    let mut starts = 0;
    for s in 0..8 {
        let seq: Vec<usize> = rows.iter().filter(|r| r.0 == s).map(|r| r.2).collect();
        assert!(!seq.is_empty());
        assert!(seq.windows(2).all(|w| w[1] <= w[0]));
        assert!(seq.last() <= seq.first());
        starts += 1;
    }
    assert_eq!(starts, 8);

    let best: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("best.json")).unwrap()).unwrap();
    let poses = best["poses"].as_array().unwrap();
    assert!((poses[0]["pitch_deg"].as_f64().unwrap() - 3.0).abs() < 1e-12);
    assert_eq!(poses[0]["roll_deg"].as_f64().unwrap(), 0.0);
    assert_eq!(poses[1]["pitch_deg"].as_f64().unwrap(), 0.0);
    assert!((poses[1]["roll_deg"].as_f64().unwrap() + 2.0).abs() < 1e-12);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["objective"], best["objective"]);
}
