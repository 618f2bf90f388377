use std::fs;
use std::process::{Command, Output};

fn kfp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kfp"))
        .args(args)
        .output()
        .expect("kfp runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn exponents_csv_contract() {
    let out = kfp(&["exponents", "--r", "1,0.1"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("r,alpha,beta,k_alpha,kappa,c_star"));
    let elastic: Vec<f64> = lines
        .next()
        .unwrap()
        .split(',')
        .take(5)
        .map(|s| s.parse().unwrap())
        .collect();
    assert!(elastic[1].abs() < 1e-12);
    assert!((elastic[2] + 2.0 / 3.0).abs() < 1e-12);
    assert!((elastic[4] + 7.848).abs() < 1e-3);
    assert!(
        text.lines().nth(1).unwrap().ends_with(','),
        "no c_star above r_c"
    );
    assert!(!text.lines().nth(2).unwrap().ends_with(','));
}

#[test]
fn critical_r_is_rejected() {
    let rc = format!("{}", (-std::f64::consts::PI / 3f64.sqrt()).exp());
    let out = kfp(&["exponents", "--r", &rc]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("merges with -2/3"));
}

#[test]
fn profile_spot_value_and_empty_range() {
    let out = kfp(&[
        "profile",
        "--gamma",
        "-0.6666666666666666",
        "--from",
        "0",
        "--to",
        "0",
        "--samples",
        "1",
    ]);
    let text = stdout(&out);
    let value: f64 = text
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    // Γ(1/3)
    assert!((value - 2.678_938_534_707_747_6).abs() < 1e-10, "{value}");
    let out = kfp(&["profile", "--gamma", "-0.5", "--samples", "0"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out), "zeta,lambda\n");
}

#[test]
fn svg_only_with_flag() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    assert!(kfp(&["profile", "--r", "0.1", "--out", d]).status.success());
    assert!(!dir.path().join("profile.svg").exists());
    assert!(dir.path().join("profile.csv").exists());
    assert!(kfp(&["profile", "--r", "0.1", "--out", d, "--svg"])
        .status
        .success());
    let svg = fs::read_to_string(dir.path().join("profile.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("<polyline"));
}

#[test]
fn manifest_lists_outputs_and_outputs_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let d = dir.path().to_str().unwrap();
        let out = kfp(&[
            "--seed", "7", "mc", "chains", "--r", "0.3", "--paths", "40", "--out", d,
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["command"], "mc");
    assert_eq!(manifest["outputs"][0], "chains.csv");
    assert!(manifest["started_at"].is_string());
    assert_eq!(
        fs::read(a.path().join("chains.csv")).unwrap(),
        fs::read(b.path().join("chains.csv")).unwrap()
    );
}

#[test]
fn cstar_reports_both_values() {
    let out = kfp(&["cstar", "--r", "0.1"]);
    let text = stdout(&out);
    let row: Vec<f64> = text
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .map(|s| s.parse().unwrap())
        .collect();
    assert!(row[1] < 0.0 && row[2] < 0.0);
    assert!(row[3] < 1e-3);
}

#[test]
fn solve_without_r_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    fs::write(&path, r#"{"mode": {"kind": "trapping"}, "n_x": 64}"#).unwrap();
    let out = kfp(&["solve", "--config", path.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("`r`"));
}

#[test]
fn solve_rejects_mode_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    fs::write(&path, r#"{"r": 0.5, "mode": {"kind": "trapping"}}"#).unwrap();
    let out = kfp(&["solve", "--config", path.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("mode"));
}

#[test]
fn small_solve_writes_schema() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    fs::write(
        &path,
        r#"{"r": 0.1, "mode": {"kind": "partial", "mu_star": 1.0}, "n_x": 40, "n_v": 32, "dt": 0.01, "t_end": 0.1, "samples": 5}"#,
    )
    .unwrap();
    let out = kfp(&["solve", "--config", path.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = stdout(&out);
    assert_eq!(
        text.lines().next(),
        Some("t,total_mass,m,a_alpha,a_m23,fit_residual,mode_residual")
    );
    // header, the initial state and five samples
    assert_eq!(text.lines().count(), 7);
}

#[test]
fn verify_all_subset_passes() {
    let out = kfp(&["verify-all", "--only", "1,4"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(text.matches("[PASS]").count(), 2);
}

#[test]
fn unknown_criterion_fails() {
    let out = kfp(&["verify-all", "--only", "9"]);
    assert!(!out.status.success());
}
