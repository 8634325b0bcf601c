use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("nopo-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn nopo(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nopo")).arg("--out").arg(out).args(args).output().unwrap()
}

fn ok(out: &Path, args: &[&str]) {
    let o = nopo(out, args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
}

/// Data rows (metadata and header skipped) as floats; empty cells become NaN.
fn rows(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse().unwrap_or(f64::NAN)).collect())
        .collect()
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().find(|l| !l.starts_with('#')).unwrap().to_string()
}

fn meta(path: &Path, key: &str) -> String {
    let prefix = format!("# {key} ");
    let text = fs::read_to_string(path).unwrap();
    text.lines().find_map(|l| l.strip_prefix(&prefix).map(str::to_string)).unwrap_or_else(|| panic!("no {key}"))
}

#[test]
fn fig1_curves() {
    let dir = scratch("fig1");
    ok(&dir, &["fig1"]);
    let data = rows(&dir.join("fig1.csv"));
    assert_eq!(header(&dir.join("fig1.csv")), "t,n0_f1_0,n0_f1_0.4,n0_f1_1.2");
    for r in &data {
        assert!((r[1] / 2e8 - 1.0).abs() < 1e-6);
    }
    // Two periods on 1024 intervals: row i and i + 512 are one period apart.
    assert!((data[512][0] - std::f64::consts::PI).abs() < 1e-12);
    for i in (0..512).step_by(37) {
        for c in 2..4 {
            assert!((data[i][c] / data[i + 512][c] - 1.0).abs() < 1e-6);
        }
    }
    assert!(dir.join("fig1.gp").exists());
    assert!(fs::read_to_string(dir.join("run_info.txt")).unwrap().contains("elapsed_seconds"));
}

#[test]
fn missing_output_directory_is_an_error() {
    let o = nopo(Path::new("/nonexistent/nopo/out"), &["fig1"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("does not exist"));
}

#[test]
fn fig2_minima() {
    let dir = scratch("fig2");
    ok(&dir, &["fig2"]);
    let file = dir.join("fig2.csv");
    let strong: f64 = meta(&file, "v_min_f1_1.2").parse().unwrap();
    let weak: f64 = meta(&file, "v_min_f1_0.4").parse().unwrap();
    assert!((strong - 0.27).abs() < 0.02, "{strong}");
    assert!((weak - 0.56).abs() < 0.02, "{weak}");
}

#[test]
fn fig3_threshold_point() {
    let dir = scratch("fig3");
    ok(&dir, &["fig3"]);
    let file = dir.join("fig3.csv");
    assert_eq!(header(&file), "fbar_over_fth,f1_over_fbar,v_min,t0,n0_at_t0,inseparable,epr,validity_ratio");
    let data = rows(&file);
    assert_eq!(data.len(), 79 * 3);
    let at = data.iter().find(|r| (r[0] - 1.0).abs() < 1e-9 && r[1] == 0.0).unwrap();
    assert!((at[2] - 0.5).abs() < 1e-3, "{}", at[2]);
}

#[test]
fn fig4_small_run() {
    let dir = scratch("fig4");
    ok(&dir, &["fig4", "--traj", "4"]);
    let file = dir.join("fig4.csv");
    assert_eq!(header(&file), "t,V_analytic,V_qsd,V_qsd_stderr");
    assert_eq!(meta(&file, "validity_warning"), "1");
    assert!(rows(&file).iter().all(|r| r[1] > 0.0 && r[2] > 0.0));
}

#[test]
fn compare_without_pump_is_vacuum() {
    let dir = scratch("compare");
    ok(&dir, &["compare", "--fbar", "0", "--f1", "0", "--traj", "8", "--t-end", "0.2", "--relaxation", "0.1"]);
    let file = dir.join("compare.csv");
    assert_eq!(header(&file), "t,V_linear,V_pp,V_pp_stderr,pp_pass,V_qsd,V_qsd_stderr,qsd_pass");
    for r in rows(&file) {
        assert_eq!((r[1], r[2], r[5]), (1.0, 1.0, 1.0));
    }
    assert_eq!(meta(&file, "pass"), "1");
}

#[test]
fn stochastic_outputs_are_reproducible() {
    let a = scratch("det-a");
    let b = scratch("det-b");
    let args = ["positivep", "--traj", "70", "--t-end", "0.2", "--relaxation", "0.2", "--lambda", "0.01", "--fbar", "2"];
    ok(&a, &[&args[..], &["--workers", "1"]].concat());
    ok(&b, &[&args[..], &["--workers", "3"]].concat());
    assert_eq!(fs::read(a.join("positivep.csv")).unwrap(), fs::read(b.join("positivep.csv")).unwrap());
    let data = rows(&a.join("positivep.csv"));
    assert_eq!(data.len(), 4);
    assert!(data.iter().all(|r| r[9] == 70.0 && r[10] == 0.0));
}

#[test]
fn qsd_records_cutoff() {
    let dir = scratch("qsd");
    ok(&dir, &["qsd", "--traj", "4", "--t-end", "0.1", "--relaxation", "0.1", "--lambda", "0.1", "--fbar", "0.5"]);
    let file = dir.join("qsd.csv");
    assert_eq!(header(&file), "t,V_mean,V_stderr,n1_mean,n2_mean,tail_pop,n_traj");
    assert_eq!(meta(&file, "n_max"), "10");
}

#[test]
fn config_file_is_honoured_and_checked() {
    let dir = scratch("config");
    let good = dir.join("good.json");
    fs::write(&good, r#"{"fbar_over_fth": 2.0}"#).unwrap();
    ok(&dir, &["--config", good.to_str().unwrap(), "semiclassical"]);
    let data = rows(&dir.join("semiclassical.csv"));
    assert!(data.iter().all(|r| (r[1] / 1e8 - 1.0).abs() < 1e-6));

    let bad = dir.join("bad.json");
    fs::write(&bad, r#"{"fbar": 2.0}"#).unwrap();
    assert!(!nopo(&dir, &["--config", bad.to_str().unwrap(), "semiclassical"]).status.success());
}

#[test]
fn variance_and_sweep_outputs() {
    let dir = scratch("variance");
    ok(&dir, &["variance", "--f1", "1.2"]);
    let v: f64 = meta(&dir.join("variance.csv"), "v_min").parse().unwrap();
    assert!((v - 0.27).abs() < 0.02);
    assert_eq!(header(&dir.join("variance.csv")), "t,V,n0");

    ok(&dir, &["sweep", "--fbar-min", "0.5", "--fbar-max", "1.5", "--fbar-step", "0.5", "--levels", "0,1"]);
    let data = rows(&dir.join("sweep.csv"));
    assert_eq!(data.len(), 6);
    // Below threshold without modulation: 1 / (1 + r).
    assert!((data[0][2] - 1.0 / 1.5).abs() < 1e-6);
}
