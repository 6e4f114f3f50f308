use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use heatalloc::io::read_json;
use heatalloc::report::{EstimateFile, ReportFile};
use heatalloc_core::domain::Method;
use heatalloc_core::simulator::{GroundTruth, NoiseSpec, ScenarioConfig};
use sha2::{Digest, Sha256};

fn heatalloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_heatalloc"))
        .args(args)
        .env("HEATALLOC_LOG", "error")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let o = heatalloc(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path, cfg: &ScenarioConfig) -> PathBuf {
    let p = dir.join("scenario.json");
    fs::write(&p, serde_json::to_string(cfg).unwrap()).unwrap();
    p
}

fn digest(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let name = p.strip_prefix(dir).unwrap().display().to_string();
                out.push((name, Sha256::digest(fs::read(&p).unwrap()).to_vec()));
            }
        }
    }
    out.sort();
    out
}

fn small_config() -> ScenarioConfig {
    let mut c = ScenarioConfig::exact(6, 4.0, 1);
    c.hca_count_scale = 999.0;
    c.noise = NoiseSpec::MODERATE;
    c
}

#[test]
fn simulate_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small_config());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let out_a = ok(&["simulate", "--config", s(&cfg), "--seed", "42", "--out", s(&a)]);
    let out_b = ok(&["simulate", "--config", s(&cfg), "--seed", "42", "--out", s(&b)]);
    assert_eq!(out_a, out_b);
    assert_eq!(digest(&a), digest(&b));
    let c = tmp.path().join("c");
    ok(&["simulate", "--config", s(&cfg), "--seed", "43", "--out", s(&c)]);
    assert_ne!(digest(&a), digest(&c));
}

#[test]
fn missing_config_exits_two_naming_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nowhere/scenario.json");
    let o = heatalloc(&["simulate", "--config", s(&missing), "--out", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains(s(&missing)));
}

#[test]
fn invalid_config_names_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = small_config();
    c.step_s = 0;
    let cfg = write_config(tmp.path(), &c);
    let o = heatalloc(&["simulate", "--config", s(&cfg), "--out", s(&tmp.path().join("x"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("step_s"));
}

#[test]
fn unknown_config_field_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("scenario.json");
    fs::write(&cfg, r#"{ "noise": { "temp_sigma": 0.1 } }"#).unwrap();
    let o = heatalloc(&["simulate", "--config", s(&cfg), "--out", s(&tmp.path().join("x"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("temp_sigma"));
}

#[test]
fn bad_lambda_is_a_usage_error() {
    let o = heatalloc(&["estimate", "--data", ".", "--lambda", "-1", "--out", "."]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn estimate_recovers_noiseless_parameters() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &ScenarioConfig::exact(8, 6.0, 5));
    let data = tmp.path().join("d");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&data)]);
    let truth: GroundTruth = read_json(&data.join("ground_truth.json")).unwrap();
    for (m, name) in [(Method::Hca, "hca"), (Method::Stv, "stv")] {
        let out = tmp.path().join(name);
        ok(&["estimate", "--data", s(&data), "--method", name, "--lambda", "1e-8", "--out", s(&out)]);
        let est: EstimateFile = read_json(&out.join("estimate.json")).unwrap();
        for (e, t) in est.theta_hat_w.iter().zip(truth.theta(m)) {
            assert!((e / t - 1.0).abs() <= 1e-6, "{name}: {e} vs {t}");
        }
        assert!(est.negative.is_empty());
    }
}

#[test]
fn auto_lambda_surfaces_a_degenerate_curve() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &ScenarioConfig::exact(4, 6.0, 5));
    let data = tmp.path().join("d");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&data)]);
    let o = heatalloc(&["estimate", "--data", s(&data), "--method", "stv", "--out", s(&tmp.path().join("e"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no corner"));
}

#[test]
fn lcurve_table_is_monotone() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = small_config();
    c.building.radiators = 12;
    c.building.subsets = 12;
    c.sampling_frequency = 1.0 / 12.0;
    let cfg = write_config(tmp.path(), &c);
    let data = tmp.path().join("d");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&data)]);
    let out = tmp.path().join("l");
    ok(&["estimate", "--data", s(&data), "--lcurve", "--lambda", "1e-2", "--out", s(&out)]);
    let text = fs::read_to_string(out.join("lcurve.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("lambda,residual_norm,prior_deviation_norm,curvature"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').take(3).map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 20);
    for w in rows.windows(2) {
        assert!(w[1][0] > w[0][0]);
        assert!(w[1][1] >= w[0][1] * (1.0 - 1e-9));
    }
}

fn season_40(dir: &Path) -> PathBuf {
    let mut c = ScenarioConfig {
        duration_days: 23.0,
        noise: NoiseSpec::MODERATE,
        ..ScenarioConfig::default()
    };
    c.building.radiators = 40;
    c.building.subsets = 40;
    c.building.floors = 8;
    let cfg = write_config(dir, &c);
    let data = dir.join("d");
    let out = ok(&["simulate", "--config", s(&cfg), "--out", s(&data)]);
    assert!(out.contains("40 radiators"), "{out}");
    data
}

#[test]
fn eight_subsets_of_forty_radiators() {
    let tmp = tempfile::tempdir().unwrap();
    let data = season_40(tmp.path());
    let subsets = tmp.path().join("subsets.csv");
    let mut text = String::from("radiator_id,subset_id\n");
    for i in 1..=40 {
        text.push_str(&format!("r{i:02},flat{}\n", (i - 1) / 5 + 1));
    }
    fs::write(&subsets, text).unwrap();
    let out = tmp.path().join("ev");
    let table = ok(&["evaluate", "--data", s(&data), "--subsets", s(&subsets), "--out", s(&out)]);
    assert!(table.contains("MAPE"));
    let rep: ReportFile = read_json(&out.join("report.json")).unwrap();
    assert_eq!(rep.schema_version, 1);
    let labels: Vec<&str> = rep.reports.iter().map(|r| r.method.as_str()).collect();
    assert_eq!(labels, ["hca_nominal", "hca_improved", "stv_improved"]);
    for r in &rep.reports {
        assert_eq!(r.rows.len(), 8);
        let sum: f64 = r.rows.iter().map(|x| x.fraction).sum();
        assert!((sum - 100.0).abs() <= 1e-9, "{sum}");
    }
    assert_eq!(ok(&["report", "--in", s(&out)]), table);

    fs::write(&subsets, "radiator_id,subset_id\nr01,a\nr99,b\n").unwrap();
    let o = heatalloc(&["evaluate", "--data", s(&data), "--subsets", s(&subsets), "--out", s(&out)]);
    assert_ne!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("r99"));
}

#[test]
fn method_against_itself_is_neutral() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small_config());
    let data = tmp.path().join("d");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&data)]);
    for label in ["hca_nominal", "hca_improved"] {
        let out = tmp.path().join(label);
        ok(&[
            "evaluate", "--data", s(&data), "--method", "hca", "--lambda", "1e-3", "--baseline", label, "--out",
            s(&out),
        ]);
        let rep: ReportFile = read_json(&out.join("report.json")).unwrap();
        let me = rep.reports.iter().find(|r| r.method == label).unwrap();
        assert_eq!(me.indicators.delta_e_hca, Some(0.0));
        assert_eq!(me.indicators.p_l, Some(0.0));
    }
    let o = heatalloc(&["evaluate", "--data", s(&data), "--baseline", "nope", "--out", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sensitivity_writes_one_row_per_level() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small_config());
    let out = tmp.path().join("sens");
    ok(&[
        "sensitivity", "--config", s(&cfg), "--axis", "heat-loss", "--levels", "0,0.1,0.2", "--out", s(&out),
    ]);
    let csv = fs::read_to_string(out.join("sensitivity.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.lines().skip(1).all(|l| l.starts_with("heat_loss,")));
}
