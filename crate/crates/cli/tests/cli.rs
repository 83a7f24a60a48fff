use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use imcid::simulation::generate_dgp;
use imcid::{Dataset, DgpConfig, Kernel, RiskContext, Scenario};
use ndarray::Array1;
use serde_json::Value;
use tempfile::TempDir;

fn imcid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_imcid"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok_json(args: &[&str]) -> Value {
    let out = imcid(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn dataset(dir: &TempDir) -> (PathBuf, Dataset) {
    let cfg = DgpConfig {
        seed: 11,
        beta_draw_seed: 12,
        ..DgpConfig::new(Scenario::HeteroGaussian, 300, 8, 3, 0.2, 0.4)
    };
    let (data, _) = generate_dgp(&cfg).unwrap();
    let path = dir.path().join("d.csv");
    std::fs::write(&path, data.to_csv_string()).unwrap();
    (path, data)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn estimate_writes_a_consistent_model() {
    let dir = TempDir::new().unwrap();
    let (data_path, data) = dataset(&dir);
    let out = dir.path().join("m.json");
    let status = imcid(&[
        "estimate",
        "--data",
        s(&data_path),
        "--delta",
        "0.261",
        "--lambda",
        "0.1",
        "--out",
        s(&out),
    ]);
    assert!(status.status.success());
    let m: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(m["schema_version"], 1);
    let beta: Vec<f64> = m["beta_hat"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert_eq!(beta.len(), 8);

    let w = imcid::WeightFn {
        w_plus: m["weights"]["w_plus"].as_f64().unwrap(),
        w_minus: m["weights"]["w_minus"].as_f64().unwrap(),
        mode: imcid::WeightMode::InverseProportion,
    };
    let kernel = Kernel::gaussian(2).unwrap();
    let ctx = RiskContext::new(&data, w, &kernel, 0.261);
    let beta = Array1::from(beta);
    let objective =
        ctx.smoothed_risk(beta.view()) + 0.1 * beta.iter().map(|b| b.abs()).sum::<f64>();
    assert!((objective - m["objective"].as_f64().unwrap()).abs() < 1e-10);
}

#[test]
fn estimate_auto_records_the_chosen_pair() {
    let dir = TempDir::new().unwrap();
    let (data_path, _) = dataset(&dir);
    let m = ok_json(&[
        "estimate",
        "--data",
        s(&data_path),
        "--delta",
        "auto",
        "--folds",
        "3",
    ]);
    let cv = &m["cross_validation"];
    let delta = m["delta"].as_f64().unwrap();
    assert!(cv["delta_grid"]
        .as_array()
        .unwrap()
        .iter()
        .any(|v| v.as_f64() == Some(delta)));
    assert_eq!(cv["held_out_risk"].as_array().unwrap().len(), 5);
}

#[test]
fn missing_file_exits_2_and_names_it() {
    let out = imcid(&[
        "estimate",
        "--data",
        "no/such/file.csv",
        "--delta",
        "0.3",
        "--lambda",
        "0.1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no/such/file.csv"));
}

#[test]
fn data_driven_test_reports_statistic_and_bandwidth() {
    let dir = TempDir::new().unwrap();
    let (data_path, _) = dataset(&dir);
    let r = ok_json(&[
        "test",
        "--data",
        s(&data_path),
        "--coord",
        "1",
        "--delta",
        "data-driven",
    ]);
    assert!(r["statistic"].as_f64().unwrap().is_finite());
    let p = r["p_value"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
    let grid: Vec<f64> = r["bandwidth"]["grid"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert!(grid.contains(&r["delta_used"].as_f64().unwrap()));
    assert_eq!(r["variance_mode"], "moment");
}

#[test]
fn unit_contrast_matches_coordinate_test() {
    let dir = TempDir::new().unwrap();
    let (data_path, _) = dataset(&dir);
    let c = dir.path().join("c.csv");
    std::fs::write(&c, "1,0,0,0,0,0,0,0\n").unwrap();
    let a = ok_json(&["test", "--data", s(&data_path), "--contrast", s(&c)]);
    let b = ok_json(&["test", "--data", s(&data_path), "--coord", "1"]);
    let (sa, sb) = (
        a["statistic"].as_f64().unwrap(),
        b["statistic"].as_f64().unwrap(),
    );
    assert!((sa - sb).abs() < 1e-10, "{sa} vs {sb}");
}

#[test]
fn coord_and_contrast_are_exclusive() {
    let dir = TempDir::new().unwrap();
    let (data_path, _) = dataset(&dir);
    let c = dir.path().join("c.csv");
    std::fs::write(&c, "1,0,0,0,0,0,0,0\n").unwrap();
    let out = imcid(&[
        "test",
        "--data",
        s(&data_path),
        "--coord",
        "1",
        "--contrast",
        s(&c),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let out = imcid(&["test", "--data", s(&data_path)]);
    assert_eq!(out.status.code(), Some(2));
    let out = imcid(&["test", "--data", s(&data_path), "--coord", "9"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn all_coords_table_has_bonferroni_column() {
    let dir = TempDir::new().unwrap();
    let (data_path, _) = dataset(&dir);
    let out = imcid(&[
        "test",
        "--data",
        s(&data_path),
        "--all-coords",
        "--alpha",
        "0.05",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header
        .iter()
        .position(|h| *h == "significant_bonferroni")
        .unwrap();
    let p_col = header.iter().position(|h| *h == "p_value").unwrap();
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 8);
    for r in rows {
        let p: f64 = r[p_col].parse().unwrap();
        assert_eq!(r[col] == "true", p < 0.05 / 8.0);
    }
}

#[test]
fn bandwidth_selects_from_the_grid_and_emits_curves() {
    let dir = TempDir::new().unwrap();
    let (data_path, _) = dataset(&dir);
    let curves = dir.path().join("c.csv");
    let r = ok_json(&[
        "bandwidth",
        "--data",
        s(&data_path),
        "--grid",
        "0.1:1.2:24",
        "--emit-curves",
        s(&curves),
    ]);
    let grid: Vec<f64> = r["grid"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert_eq!(grid.len(), 24);
    assert!(grid.contains(&r["delta_hat"].as_f64().unwrap()));
    let text = std::fs::read_to_string(&curves).unwrap();
    assert_eq!(text.lines().next(), Some("delta,V,B,M"));
    assert_eq!(text.lines().count(), 25);
}

#[test]
fn malformed_grid_exits_2() {
    let dir = TempDir::new().unwrap();
    let (data_path, _) = dataset(&dir);
    for bad in ["0.1:1.2", "1.2:0.1:5", "a:b:c"] {
        let out = imcid(&["bandwidth", "--data", s(&data_path), "--grid", bad]);
        assert_eq!(out.status.code(), Some(2), "{bad}");
    }
}

#[test]
fn seeded_simulation_is_reproducible() {
    let args = [
        "--threads",
        "1",
        "simulate",
        "--preset",
        "table1-gaussian",
        "--reps",
        "1",
        "--seed",
        "7",
    ];
    let a = imcid(&args);
    let b = imcid(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let r: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert!(r["rejection_rate"].is_number());
}

#[test]
fn unknown_preset_exits_2() {
    let out = imcid(&["simulate", "--preset", "table9"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn uniform_scenario_with_signal() {
    let dir = TempDir::new().unwrap();
    let stats = dir.path().join("s.csv");
    let qq = dir.path().join("q.csv");
    let r = ok_json(&[
        "simulate",
        "--scenario",
        "uniform",
        "--beta1",
        "0.1",
        "--cell",
        "n=300,d=20",
        "--reps",
        "3",
        "--seed",
        "5",
        "--emit-statistics",
        s(&stats),
        "--emit-qq",
        s(&qq),
    ]);
    assert_eq!(r["dgp"]["scenario"], "hetero_uniform");
    assert_eq!(r["dgp"]["beta1"], 0.1);
    assert_eq!(r["replicates"], 3);
    assert_eq!(
        std::fs::read_to_string(&qq).unwrap().lines().next(),
        Some("theoretical,sample")
    );
    assert!(std::fs::read_to_string(&stats).unwrap().lines().count() >= 2);
}

#[test]
fn power_mode_needs_a_grid() {
    let out = imcid(&[
        "simulate",
        "--scenario",
        "gaussian",
        "--power",
        "--reps",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let r = ok_json(&[
        "simulate",
        "--preset",
        "power-gaussian-s3",
        "--power",
        "--reps",
        "2",
        "--cell",
        "n=200,d=10",
    ]);
    assert_eq!(r["points"].as_array().unwrap().len(), 8);
}

#[test]
fn environment_overrides_the_rate_constant() {
    let dir = TempDir::new().unwrap();
    let (data_path, data) = dataset(&dir);
    let out = Command::new(env!("CARGO_BIN_EXE_imcid"))
        .args(["test", "--data", s(&data_path), "--coord", "2"])
        .env("IMCID_DELTA_C", "0.5")
        .output()
        .unwrap();
    assert!(out.status.success());
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    let expect = 0.5 * (data.n() as f64).powf(-0.2);
    assert!((r["delta_used"].as_f64().unwrap() - expect).abs() < 1e-12);
}
