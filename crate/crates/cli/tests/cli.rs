mod common;

use std::path::Path;
use std::process::Command;

use serde_json::json;

fn solve(config: &str, args: &[&str], out: &Path) -> std::process::Output {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("config.json");
    std::fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_rgne"))
        .arg("solve")
        .arg(&path)
        .args(args)
        .env("RGNE_OUT_DIR", out)
        .output()
        .unwrap()
}

#[test]
fn verified_run_exits_zero_and_writes_to_env_dir() {
    let out = tempfile::tempdir().unwrap();
    let o = solve(common::SMALL, &["--mode", "both", "--centralized"], out.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("ripfbf") && stdout.contains("tseng"));
    let csv = std::fs::read_to_string(out.path().join("residuals.csv")).unwrap();
    assert!(csv.contains(",tseng,path,") && csv.contains(",ripfbf,path,"));
}

#[test]
fn out_flag_wins_over_env() {
    let env_dir = tempfile::tempdir().unwrap();
    let flag_dir = tempfile::tempdir().unwrap();
    let flag = flag_dir.path().to_str().unwrap();
    let o = solve(common::SMALL, &["--out", flag], env_dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(flag_dir.path().join("equilibrium.json").is_file());
    assert!(!env_dir.path().join("equilibrium.json").exists());
}

#[test]
fn sweep_flag_selects_topologies() {
    let out = tempfile::tempdir().unwrap();
    let three = common::with(common::SMALL, |v| {
        let agents = v["game"]["agents"].as_array_mut().unwrap();
        agents.push(agents[0].clone());
        v["game"]["coupling"][0]["nominal"].as_array_mut().unwrap().push(json!([1]));
        v["game"]["coupling"][0]["perturbation"].as_array_mut().unwrap().push(json!([[0.5]]));
        let local = v["game"]["uncertainty"]["local"].as_array_mut().unwrap();
        local.push(local[0].clone());
    });
    let o = solve(&three, &["--sweep", "topologies=complete,star,ring"], out.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.path().join("residuals.csv")).unwrap();
    for t in ["complete", "star", "ring"] {
        assert!(csv.contains(&format!(",ripfbf,{t},")));
    }
}

#[test]
fn config_errors_exit_four() {
    let out = tempfile::tempdir().unwrap();
    let missing = common::with(common::SMALL, |v| {
        v.as_object_mut().unwrap().remove("graph");
    });
    let o = solve(&missing, &[], out.path());
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/graph"));
    let o = solve(common::SMALL, &["--sweep", "topologies=ring,moebius"], out.path());
    assert_eq!(o.status.code(), Some(4));
    let o = solve(common::SMALL, &["--mode", "fast"], out.path());
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn budget_exhaustion_exits_three() {
    let out = tempfile::tempdir().unwrap();
    let short = common::with(common::SMALL, |v| v["solver"]["max_iterations"] = json!(3));
    let o = solve(&short, &[], out.path());
    assert_eq!(o.status.code(), Some(3));
    // results are still written
    assert!(out.path().join("residuals.csv").is_file());
}

#[test]
fn loose_solve_fails_verification_with_two() {
    let out = tempfile::tempdir().unwrap();
    let loose = common::with(common::SMALL, |v| v["solver"]["tolerance"] = json!(0.05));
    let o = solve(&loose, &[], out.path());
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stdout));
}
