use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_semitrace"));
    c.env("RUST_LOG", "warn");
    c
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

#[test]
fn orbits_ho1d_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&["orbits", "--config", config("ho1d.toml").to_str().unwrap(), "--out", out]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let stdout = text(&o.stdout);
    assert!(stdout.contains("1 primitive orbit"), "{stdout}");
    assert!(stdout.contains("k=  1  T*=3.1415926536"), "{stdout}");
    assert!(stdout.contains("sigma=  2"), "{stdout}");
    assert!(stdout.contains("sigma= -2"), "{stdout}");

    let csv = fs::read_to_string(dir.path().join("orbits.csv")).unwrap();
    assert!(csv.starts_with("k,t_star,period,action,maslov,det_i_minus_p,closure_residual,q0,p0"));
    assert_eq!(csv.lines().count(), 3);
    let side: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("orbits.manifest.json")).unwrap()).unwrap();
    assert_eq!(side["manifest"]["command"], "orbits");
    assert_eq!(side["manifest"]["config"]["system"]["family"], "ho1d");
}

#[test]
fn empty_seeds_give_warning_and_empty_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["orbits", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    assert!(text(&o.stderr).contains("orbit table is empty"), "{}", text(&o.stderr));
    assert!(text(&o.stdout).contains("0 primitive orbit(s), 0 entries"));
    let csv = fs::read_to_string(dir.path().join("orbits.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
}

#[test]
fn empty_routes_is_a_usage_error() {
    let o = run(&["rho", "--routes", ""]);
    assert_eq!(o.status.code(), Some(2), "{}", text(&o.stderr));
    let o = run(&["rho", "--routes", "exact,bogus"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn malformed_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "energy = 1.0\nenergi = 2.0\n").unwrap();
    let o = run(&["orbits", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains("energi"), "{}", text(&o.stderr));

    fs::write(&path, "energy = \"high\"\n").unwrap();
    let o = run(&["orbits", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let o = run(&["orbits", "--config", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn maslov_mutation_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let ok = run(&["validate", "--checks", "maslov,bohr_sommerfeld", "--out", out]);
    assert!(ok.status.success(), "{}{}", text(&ok.stdout), text(&ok.stderr));

    let bad = run(&["validate", "--checks", "maslov,bohr_sommerfeld", "--maslov-shift", "2", "--out", out]);
    assert_eq!(bad.status.code(), Some(1));
    assert_eq!(text(&bad.stdout).matches("[FAIL]").count(), 2, "{}", text(&bad.stdout));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("validation.json")).unwrap()).unwrap();
    assert_eq!(report["data"]["passed"], false);
    assert_eq!(report["manifest"]["parameters"]["maslov_shift"], 2);
}

#[test]
fn unknown_check_is_a_usage_error() {
    let o = run(&["validate", "--checks", "nonsense"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn rho_ho1d_writes_curves() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("ho1d.toml");
    let text_cfg = fs::read_to_string(config("ho1d.toml")).unwrap().replace("points = 801", "points = 201");
    fs::write(&cfg, text_cfg).unwrap();
    let o = run(&["rho", "--config", cfg.to_str().unwrap(), "--hbar", "0.05", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let stdout = text(&o.stdout);
    assert!(stdout.contains("semiclassical vs exact"), "{stdout}");

    let csv_path = dir.path().join("rho_hbar_5e-2.csv".replace('-', "m"));
    let mut r = csv::Reader::from_path(&csv_path).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(&header[..4], ["energy", "rho_exact", "rho_semiclassical", "weyl"]);
    let rows: Vec<Vec<f64>> = r.records().map(|x| x.unwrap().iter().map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 201);
    // semiclassical within 10 % of exact in sup norm
    let scale = rows.iter().map(|r| r[1].abs()).fold(0.0, f64::max);
    let dev = rows.iter().map(|r| (r[1] - r[2]).abs()).fold(0.0, f64::max);
    assert!(dev / scale < 0.1, "{}", dev / scale);
    assert!(dir.path().join("rho_summary.json").exists());
}

#[test]
fn staphase_suite_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["staphase", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}{}", text(&o.stdout), text(&o.stderr));
    assert_eq!(text(&o.stdout).matches("[PASS]").count(), 3);
}
