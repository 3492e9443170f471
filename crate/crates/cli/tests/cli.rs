use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coulomb-rg"))
        .arg("--out-dir")
        .arg(dir.join("out"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join("out").join(name)).unwrap()
}

#[test]
fn oracle_example_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(tmp.path(), &["oracle", "--side", "5", "--beta", "25.13", "--z", "0.05", "--nmax", "4"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("oracle.siegert_kac") && l.contains("pass")), "{stdout}");
    let sectors = read(tmp.path(), "oracle_sectors.csv");
    assert!(sectors.starts_with("n,charge,mass,coefficient\n"));
    assert!(!sectors.contains('\r'));
}

#[test]
fn separatrix_example_writes_the_table() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(tmp.path(), &["separatrix", "--y1", "0.01", "--L", "9", "--R", "6"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(tmp.path(), "separatrix.csv");
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&header[..4], ["y1", "sigma_fixed_point", "sigma_shooting", "agreement"]);
    let row: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(row[0], 0.01);
    assert!(row[3] <= 1e-8);
}

#[test]
fn missing_required_flag_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [&["flow"][..], &["separatrix", "--L", "9"], &["oracle", "--side", "5", "--beta", "25"]] {
        let o = run(tmp.path(), args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(!tmp.path().join("out").exists(), "{args:?} wrote files");
    }
}

#[test]
fn invalid_values_are_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [
        &["decompose", "--L", "1"][..],
        &["decompose", "--taper", "gauss"],
        &["oracle", "--side", "4", "--beta", "25", "--z", "0.1", "--nmax", "2"],
        &["flow", "--y1", "0.5"],
        &["--workers", "0", "coeffs"],
        &["bogus"],
    ] {
        let o = run(tmp.path(), args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(!tmp.path().join("out").exists(), "{args:?} wrote files");
    }
}

#[test]
fn unknown_config_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, "[decompose]\nside = 9\n").unwrap();
    let o = run(tmp.path(), &["--config", cfg.to_str().unwrap(), "decompose"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn zero_leakage_tolerance_fails_by_name() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, "[checks]\nleakage_tol = 0.0\n").unwrap();
    let o = run(tmp.path(), &["--config", cfg.to_str().unwrap(), "decompose"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("decompose.leakage"));
    let report: serde_json::Value = serde_json::from_str(&read(tmp.path(), "report.json")).unwrap();
    assert_eq!(report["passed"], false);
    let failed: Vec<&str> =
        report["checks"].as_array().unwrap().iter().filter(|c| c["passed"] == false).map(|c| c["name"].as_str().unwrap()).collect();
    assert_eq!(failed, ["decompose.leakage"]);
}

#[test]
fn verify_passes_with_a_stable_report() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let oa = run(a.path(), &["verify"]);
    assert!(oa.status.success(), "{}", String::from_utf8_lossy(&oa.stderr));
    let ob = run(b.path(), &["--workers", "1", "verify"]);
    assert!(ob.status.success());

    let printed: serde_json::Value = serde_json::from_slice(&oa.stdout).unwrap();
    assert_eq!(printed["schema"], 1);
    assert_eq!(printed["passed"], true);
    assert!(printed["runtime_seconds"].as_f64().unwrap() > 0.0);
    let keys = |v: &serde_json::Value| v.as_object().unwrap().keys().cloned().collect::<Vec<_>>();
    assert_eq!(keys(&printed), keys(&serde_json::from_slice(&ob.stdout).unwrap()));

    // every artifact, including the report, is bit-identical
    let mut names: Vec<_> = std::fs::read_dir(a.path().join("out")).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 10);
    for n in names {
        let x = std::fs::read(a.path().join("out").join(&n)).unwrap();
        let y = std::fs::read(b.path().join("out").join(&n)).unwrap();
        assert!(x == y, "{n:?} differs");
    }
}
