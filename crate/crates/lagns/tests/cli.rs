use std::path::{Path, PathBuf};
use std::process::Command;

use lagns::config::Scenario;
use lagns::table::{convergence_table, Order};
use lagns::{run, RunOptions};

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn lagns() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_lagns"));
    for var in ["LAGNS_CONFIG", "LAGNS_OUT", "LAGNS_SEED", "LAGNS_THREADS"] {
        c.env_remove(var);
    }
    c
}

fn read_json(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn rest_state_exits_zero_with_vanishing_residuals() {
    let out = tempfile::tempdir().unwrap();
    let status = lagns()
        .args(["solve", "--config"])
        .arg(scenario("rest.toml"))
        .arg("--out")
        .arg(out.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let report = read_json(out.path());
    for mode in ["general", "homogeneous"] {
        let p = &report["sections"][format!("picard [{mode}]")];
        assert!(p["mass_defect"].as_f64().unwrap() < 1e-12);
        assert!(p["lagrangian_momentum"].as_f64().unwrap() < 1e-12);
        assert!(p["state"]["fixed_point_residual"].as_f64().unwrap() < 1e-12);
    }
    assert!(out.path().join("report.md").exists());
}

#[test]
fn degenerate_flow_exits_nonzero_and_names_the_gate() {
    let out = tempfile::tempdir().unwrap();
    let o = lagns()
        .args(["verify", "--config"])
        .arg(scenario("12_controls.toml"))
        .arg("--out")
        .arg(out.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("flow nondegenerate"), "{stderr}");
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("flow map degenerate"), "{stdout}");
}

#[test]
fn config_errors_exit_two_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    let text = std::fs::read_to_string(scenario("rest.toml")).unwrap().replace("n = 32", "n = 32\nresolution = 3");
    std::fs::write(&path, text).unwrap();
    let o = lagns().args(["run", "--config"]).arg(&path).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("resolution") && stderr.contains("line"), "{stderr}");
}

#[test]
fn subcommand_must_match_pipeline() {
    let o = lagns()
        .args(["stability", "--config"])
        .arg(scenario("rest.toml"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn env_overrides_apply() {
    let out = tempfile::tempdir().unwrap();
    let status = lagns()
        .arg("run")
        .env("LAGNS_CONFIG", scenario("05_flow_algebra.toml"))
        .env("LAGNS_OUT", out.path())
        .env("LAGNS_SEED", "99")
        .env("LAGNS_THREADS", "2")
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert_eq!(read_json(out.path())["seed"], 99);
}

#[test]
fn reruns_produce_identical_reports() {
    let sc = Scenario::load(&scenario("05_flow_algebra.toml")).unwrap();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        run(&sc, &RunOptions { out: Some(d.path().into()), seed: None }).unwrap();
    }
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("report.json")).unwrap();
    assert_eq!(read(&dirs[0]), read(&dirs[1]));
    // and the seed is actually used
    let other = tempfile::tempdir().unwrap();
    run(&sc, &RunOptions { out: Some(other.path().into()), seed: Some(1234) }).unwrap();
    assert_ne!(read(&dirs[0]), std::fs::read(other.path().join("report.json")).unwrap());
}

#[test]
fn snapshots_are_written_and_readable() {
    let mut sc = Scenario::load(&scenario("rest.toml")).unwrap();
    sc.solve.as_mut().unwrap().snapshots = true;
    let out = tempfile::tempdir().unwrap();
    run(&sc, &RunOptions { out: Some(out.path().into()), seed: None }).unwrap();
    let (u, meta) = lagns::snapshot::read_snapshot(&out.path().join("snapshots/general_u_final.bin")).unwrap();
    assert_eq!(meta.n, 32);
    assert_eq!(u.max_abs(), 0.0);
}

#[test]
fn manufactured_heat_table_has_order_two() {
    let sc = Scenario::load(&scenario("manufactured_heat.toml")).unwrap();
    let t = convergence_table(&sc, &[]).unwrap();
    assert_eq!(t.rows.len(), 3);
    for o in t.orders() {
        let v = o.value().unwrap();
        assert!((v - 2.0).abs() <= 0.1, "order {v}");
    }
}

#[test]
fn exact_mode_table_is_marked_exact() {
    let sc = Scenario::load(&scenario("01_exact_lame.toml")).unwrap();
    let t = convergence_table(&sc, &[[64, 4], [64, 8], [64, 16]]).unwrap();
    assert!(t.orders().iter().all(|o| matches!(o, Order::Exact(_))), "{t:?}");
}

#[test]
fn single_level_table_is_an_error() {
    let sc = Scenario::load(&scenario("manufactured_heat.toml")).unwrap();
    assert!(convergence_table(&sc, &[[16, 20]]).is_err());
    let o = lagns()
        .args(["table", "--level", "16:20", "--config"])
        .arg(scenario("manufactured_heat.toml"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("at least 2 levels"));
}
