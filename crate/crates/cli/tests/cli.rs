use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rose_core::fitting::{generate_synthetic, linspace, write_dataset_csv, IsdNuisance, ModelKind, SyntheticModel};
use rose_core::units::{AngularFrequency, IsdCoefficient};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rosesim"))
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn run(dir: &Path, args: &[&str], threads: Option<usize>) -> Output {
    let mut c = bin();
    c.current_dir(dir).args(args);
    if let Some(n) = threads {
        c.env("ROSESIM_THREADS", n.to_string());
    }
    c.output().unwrap()
}

fn stdout_json(o: &Output) -> serde_json::Value {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn pulse_design_point() {
    let dir = tempfile::tempdir().unwrap();
    let v = stdout_json(&run(dir.path(), &["pulse", "--bandwidth-khz", "800", "--rabi-khz", "800"], None));
    assert!((v["mu"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!((v["beta_khz"].as_f64().unwrap() - 400.0).abs() < 1e-9);
    assert!((v["t23_min_us"].as_f64().unwrap() - 10.0).abs() < 1e-9);
    assert!((v["t12_min_us"].as_f64().unwrap() - 5.0).abs() < 1e-9);
}

#[test]
fn pulse_profile_tracks_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["pulse", "--bandwidth-khz", "1600", "--profile-points", "61", "--out", "p.csv"], None);
    assert!(o.status.success());
    let text = fs::read_to_string(dir.path().join("p.csv")).unwrap();
    let mut rows = 0;
    for line in text.lines().skip(1) {
        let f: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert!((f[1] - f[2]).abs() < 1e-4, "{line}");
        rows += 1;
    }
    assert_eq!(rows, 61);
    assert!(dir.path().join("p.csv.manifest.json").exists());
}

#[test]
fn unknown_flag_exits_2_without_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["map", "--out", "g.csv", "--frobnicate"], None);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn config_errors_exit_2_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.json"), r#"{"ensemble": {"n_ions": 10, "warp": 1}}"#).unwrap();
    let o = run(dir.path(), &["simulate", "--config", "c.json", "--out", "t.csv"], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("warp"));
    assert!(!dir.path().join("t.csv").exists());

    fs::write(dir.path().join("m.json"), r#"{"bandwidths": "0:5:1"}"#).unwrap();
    let o = run(dir.path(), &["map", "--config", "m.json", "--out", "g.csv"], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bandwidths"));

    let o = run(dir.path(), &["pulse"], Some(0));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numerical_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["pulse", "--bandwidth-khz", "400", "--rabi-khz", "800"], None);
    assert_eq!(o.status.code(), Some(1));
    // second rephasing pulse moved onto the first
    let mut cfg: serde_json::Value = serde_json::from_str(&fs::read_to_string(data("rose_sequence.json")).unwrap()).unwrap();
    cfg["pulses"][2]["arrival_us"] = serde_json::json!(6.0);
    cfg["ensemble"]["n_ions"] = serde_json::json!(16);
    fs::write(dir.path().join("c.json"), cfg.to_string()).unwrap();
    let o = run(dir.path(), &["simulate", "--config", "c.json", "--out", "t.csv"], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sequencing"));
}

#[test]
fn simulate_is_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let a = run(dir.path(), &["simulate", "--n-ions", "300", "--seed", "7", "--out", "a.csv"], Some(1));
    let b = run(dir.path(), &["simulate", "--n-ions", "300", "--seed", "7", "--out", "b.csv"], Some(3));
    assert!(a.status.success() && b.status.success());
    let fa = fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(fa, fs::read(dir.path().join("b.csv")).unwrap());
    assert!(String::from_utf8_lossy(&fa).starts_with("t_us,re_field,im_field,abs_field\n"));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["ensemble"]["n_ions"], 300);
    assert_eq!(manifest["config"]["phase_cycle"], true);
    assert_eq!(manifest["config"]["sample_ns"], 20.0);
}

#[test]
fn map_grid_columns_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let material = data("er_yso_site1.json");
    let args = |out: &'static str| -> Vec<String> {
        ["map", "--material", material.to_str().unwrap(), "--angles", "0:180:10", "--bandwidths", "0.5:10:0.5MHz", "--out", out]
            .iter()
            .map(|s| s.to_string())
            .collect()
    };
    let a: Vec<String> = args("a.csv");
    let b: Vec<String> = args("b.csv");
    let oa = run(dir.path(), &a.iter().map(String::as_str).collect::<Vec<_>>(), Some(1));
    let ob = run(dir.path(), &b.iter().map(String::as_str).collect::<Vec<_>>(), Some(4));
    assert!(oa.status.success() && ob.status.success());
    let text = fs::read_to_string(dir.path().join("a.csv")).unwrap();
    assert_eq!(text.as_bytes(), fs::read(dir.path().join("b.csv")).unwrap());
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "theta_deg,b_mhz,efficiency,tbp,kappa_total,t2_of_b_us");
    assert_eq!(lines.count(), 19 * 20);
}

#[test]
fn rose_eval_from_scenario_file() {
    let dir = tempfile::tempdir().unwrap();
    let scen = data("rose_scenario.json");
    let o = run(dir.path(), &["rose", "eval", "--config", scen.to_str().unwrap(), "--out", "r.csv"], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("r.csv")).unwrap();
    let first: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(first[0], "800");
    let eta: f64 = first[3].parse().unwrap();
    assert!((eta / (0.34 * (-40.0f64 / 138.0).exp()) - 1.0).abs() < 1e-9);
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn isd_estimate_reports_decomposition() {
    let dir = tempfile::tempdir().unwrap();
    let m = data("er_yso_site1.json");
    let v = stdout_json(&run(dir.path(), &["isd", "estimate", "--material", m.to_str().unwrap(), "--theta-deg", "135"], None));
    let mag = v["magnetic"]["kappa_per_s_per_khz"].as_f64().unwrap();
    assert!((mag / 0.33 - 1.0).abs() < 0.03);
    let total = v["total"]["kappa_per_s_per_khz"].as_f64().unwrap();
    let el = v["electric"]["kappa_per_s_per_khz"].as_f64().unwrap();
    assert!((total - mag - el).abs() < 1e-12);
    assert!(v["total"]["hz_per_ion_per_cm3"].as_f64().unwrap() > 0.0);
}

#[test]
fn fit_isd_recovers_kappa() {
    let dir = tempfile::tempdir().unwrap();
    let model = SyntheticModel::Isd {
        fixed: IsdNuisance::default(),
        kappa: IsdCoefficient::from_per_s_per_khz(0.8),
    };
    let grid: Vec<f64> = linspace(0.8, 7.1, 9).into_iter().map(|m| AngularFrequency::from_mhz(m).rad_per_s()).collect();
    let pts = generate_synthetic(&model, &grid, 0.0, 0).unwrap();
    let mut buf = Vec::new();
    write_dataset_csv(ModelKind::Isd, &pts, &mut buf).unwrap();
    fs::write(dir.path().join("d.csv"), buf).unwrap();
    let v = stdout_json(&run(dir.path(), &["fit", "isd", "d.csv", "--out", "fit.json"], None));
    assert!((v["params"]["kappa"]["value"].as_f64().unwrap() / 0.8 - 1.0).abs() < 1e-8);
    assert!((v["derived"]["T2_zero"]["value"].as_f64().unwrap() - 151.37).abs() < 0.01);
    assert!(dir.path().join("fit.json.manifest.json").exists());

    // a wrong Rabi frequency shifts the fitted kappa
    let v = stdout_json(&run(dir.path(), &["fit", "isd", "d.csv", "--rabi-khz", "900"], None));
    assert!((v["params"]["kappa"]["value"].as_f64().unwrap() - 0.8).abs() > 1e-3);
}

#[test]
fn fit_rejects_missing_columns() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("d.csv"), "x,y\n1,2\n").unwrap();
    let o = run(dir.path(), &["fit", "decay", "d.csv"], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("t23_us"));
}

#[test]
fn reproduce_exit_code_follows_failures() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["reproduce", "paper"], None);
    let text = String::from_utf8(o.stdout).unwrap();
    let any_fail = text.lines().any(|l| l.split_whitespace().nth(1) == Some("FAIL"));
    assert_eq!(o.status.code(), Some(if any_fail { 1 } else { 0 }));
    assert!(text.lines().last().unwrap().ends_with("failed"));
}
