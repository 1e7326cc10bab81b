use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn kohler(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kohler"))
        .current_dir(dir)
        .env("RUST_LOG", "error")
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn matrix(v: &Value) -> [[f64; 3]; 3] {
    serde_json::from_value(v.clone()).unwrap()
}

const CHECKER: &str = r#"{"material": {"variant": "Checkerboard4", "params": {"alpha": [1, 2, 3, 4], "hall": [1, 1, 1, 1]}},
 "resolution": 64, "h": [1, 0, 0]}"#;

#[test]
fn homogeneous_solve() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "c.json",
        r#"{"material": {"variant": "Homogeneous", "params": {"conductivity": 2.5, "hall": 0.3}}, "resolution": 8, "h": [0.2, 0.4, 1.0]}"#,
    );
    let o = kohler(dir.path(), &["solve", "--config", "c.json", "--out", "r.json"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rep: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    let s = matrix(&rep["sigma_star"]);
    for (i, row) in s.iter().enumerate() {
        for (j, x) in row.iter().enumerate() {
            assert!((x - if i == j { 2.5 } else { 0.0 }).abs() < 1e-14);
        }
    }
    let gap = matrix(&rep["gap"]);
    assert!(gap.iter().flatten().all(|x| x.abs() < 1e-14));
}

#[test]
fn checkerboard_gap_is_positive() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.json", CHECKER);
    let o = kohler(dir.path(), &["solve", "--config", "c.json"]);
    assert_eq!(o.status.code(), Some(0));
    let rep: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let eig: [f64; 3] = serde_json::from_value(rep["gap_eigenvalues"].clone()).unwrap();
    assert!(eig[2] > 1e-3, "{eig:?}");
    assert_eq!(rep["gap_psd"], Value::Bool(true));
}

#[test]
fn requested_outputs_only() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "c.json",
        r#"{"material": {"variant": "Homogeneous", "params": {"conductivity": 1.0, "hall": 0.0}}, "resolution": 4, "outputs": ["curl_defect"]}"#,
    );
    let o = kohler(dir.path(), &["solve", "--config", "c.json"]);
    let rep: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(rep.get("curl_defect").is_some());
    assert!(rep.get("sigma_star").is_none());
    assert!(rep.get("dims").is_some());
}

#[test]
fn malformed_config_exits_1_without_output() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.json", "{\"material\": ");
    let o = kohler(dir.path(), &["solve", "--config", "c.json", "--out", "r.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!dir.path().join("r.json").exists());

    write(
        dir.path(),
        "odd.json",
        r#"{"material": {"variant": "Homogeneous", "params": {"conductivity": 1.0, "hall": 0.0}}, "resolution": 5}"#,
    );
    let o = kohler(dir.path(), &["solve", "--config", "odd.json"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn no_convergence_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "c.json",
        r#"{"material": {"variant": "Checkerboard4", "params": {"alpha": [1, 2, 3, 4], "hall": [1, 1, 1, 1]}},
         "resolution": 16, "h": [1, 0, 0], "solver": {"max_iterations": 1}}"#,
    );
    let o = kohler(dir.path(), &["solve", "--config", "c.json", "--out", "r.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("r.json").exists());
}

#[test]
fn solve_is_idempotent_with_cache() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.json", CHECKER);
    let args = ["solve", "--config", "c.json", "--cache", "cache", "--resolution", "32"];
    let a = kohler(dir.path(), &args);
    let b = kohler(dir.path(), &args);
    let c = kohler(dir.path(), &["solve", "--config", "c.json", "--resolution", "32"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
    assert!(std::fs::read_dir(dir.path().join("cache")).unwrap().count() >= 2);
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.json", CHECKER);
    let one = kohler(dir.path(), &["solve", "--config", "c.json", "--resolution", "16", "--threads", "1"]);
    let two = kohler(dir.path(), &["solve", "--config", "c.json", "--resolution", "16", "--threads", "2"]);
    let a: Value = serde_json::from_str(&stdout(&one)).unwrap();
    let b: Value = serde_json::from_str(&stdout(&two)).unwrap();
    let (ga, gb) = (matrix(&a["gap"]), matrix(&b["gap"]));
    for i in 0..3 {
        for j in 0..3 {
            assert!((ga[i][j] - gb[i][j]).abs() <= 1e-12 * ga[0][0].abs().max(1.0));
        }
    }
}

#[test]
fn oracle_commands() {
    let dir = tempfile::tempdir().unwrap();
    let o = kohler(dir.path(), &["oracle", "laminate-gap", "--p", "2", "--theta", "1e-8", "--alpha2", "100", "--h3", "1"]);
    assert!(stdout(&o).contains("signs = (+,-)"), "{}", stdout(&o));
    let o = kohler(
        dir.path(),
        &["oracle", "laminate-gap", "--p", "2", "--theta", "0.01", "--alpha2", "100", "--h3", "1", "--format", "json"],
    );
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["d22"].as_f64().unwrap() < 0.0);

    let o = kohler(dir.path(), &["oracle", "laminate-rho", "--theta", "0.5", "--alpha2", "2", "--h3", "1", "--format", "json"]);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let rho = matrix(&v["rho_star"]);
    assert!((rho[2][2] - 0.5).abs() < 1e-15);

    let o = kohler(dir.path(), &["oracle", "no-such-oracle"]);
    assert_eq!(o.status.code(), Some(1));

    let o = kohler(dir.path(), &["oracle", "checkerboard-check", "--alpha", "2,1,2,4", "--r", "2,2,1,1", "--h", "1,0,0"]);
    assert_eq!(stdout(&o).trim(), "EQUALITY");
    let o = kohler(dir.path(), &["oracle", "checkerboard-check", "--alpha", "1,2,3,4", "--r", "1,1,1,1", "--h", "1,0,0"]);
    assert_eq!(stdout(&o).trim(), "NOT EQUAL");

    write(
        dir.path(),
        "layered.json",
        r#"{"variant": "Layered", "params": {"normal": [1, 0, 0],
            "conductivity": {"kind": "phases", "fractions": [0.5, 0.5], "values": [1, 3]},
            "hall": {"kind": "constant", "value": 2.0}}}"#,
    );
    let o = kohler(
        dir.path(),
        &["oracle", "layered-gap", "--config", "layered.json", "--h", "0,1,0", "--format", "json"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(matrix(&v["gap"]).iter().flatten().all(|x| *x == 0.0));
}

fn csv_rows(text: &str) -> Vec<std::collections::HashMap<String, String>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers().unwrap().clone();
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            headers.iter().map(String::from).zip(rec.iter().map(String::from)).collect()
        })
        .collect()
}

const LAMINATE: &str = r#"{"material": {"variant": "LaminateRank1", "params": {"theta": 0.3333333333333333, "alpha2": 4.0}},
 "resolution": 16, "h": [0, 0, 0.5]}"#;

#[test]
fn sweep_resolution_converges() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.json", LAMINATE);
    let o = kohler(dir.path(), &["sweep", "--config", "c.json", "--axis", "resolution", "--values", "16,32,64"]);
    assert_eq!(o.status.code(), Some(0));
    let rows = csv_rows(&stdout(&o));
    let errs: Vec<f64> = rows.iter().map(|r| r["oracle_error"].parse().unwrap()).collect();
    assert_eq!(errs.len(), 3);
    assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
}

#[test]
fn sweep_gap_scales_quadratically() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.json", LAMINATE);
    let o = kohler(dir.path(), &["sweep", "--config", "c.json", "--axis", "h3", "--values", "0.1,0.2,0.4,0.8"]);
    let rows = csv_rows(&stdout(&o));
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r["value"].parse::<f64>().unwrap().ln(), r["gap_norm"].parse::<f64>().unwrap().ln()))
        .collect();
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!((slope - 2.0).abs() <= 0.05, "{slope}");
}

#[test]
fn sweep_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.json", LAMINATE);
    let o = kohler(dir.path(), &["sweep", "--config", "c.json", "--axis", "theta", "--values", ""]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("index,value,status"));

    let o = kohler(dir.path(), &["sweep", "--config", "c.json", "--axis", "theta", "--values", "0.25,1.5"]);
    assert_eq!(o.status.code(), Some(0));
    let rows = csv_rows(&stdout(&o));
    assert_eq!(rows[0]["status"], "ok");
    assert!(rows[1]["status"].starts_with("error"));

    let o = kohler(dir.path(), &["sweep", "--config", "c.json", "--axis", "nonsense", "--values", "1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = kohler(dir.path(), &["verify", "identities"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("[PASS]"));
    let o = kohler(dir.path(), &["verify", "no-such-suite"]);
    assert_eq!(o.status.code(), Some(1));
    // the sign claim at theta=0.01, alpha2=100 does not hold
    let o = kohler(dir.path(), &["verify", "sign-change"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("[FAIL]"));
}

#[test]
fn generate_writes_readable_grid() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "c.json",
        r#"{"material": {"variant": "SmoothRandom", "params": {"seed": 1, "modes": 2, "contrast": 4.0, "hall_amplitude": 0.5}}, "resolution": 8}"#,
    );
    let o = kohler(dir.path(), &["generate", "--config", "c.json", "--out", "g.bin", "--seed", "42"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let g = kohler_core::io::load_grid(&dir.path().join("g.bin")).unwrap();
    let direct = kohler_core::microstructure::sample_smooth_random(42, 2, 4.0, 0.5, 8).unwrap();
    assert_eq!(g, direct);
}
