use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const MARKET: &str = "[grid]\nhorizon = 1\nnodes = 33\n[coefficients]\nr = 0.03\nmu = 0.08\nsigma = 0.3\n[jumps.0]\nintensity = 0.5\nsizes = 0.05, 0.15\nprobs = 0.5, 0.5\n";

fn setup(run: &str) -> TempDir {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("market.txt"), MARKET).unwrap();
    fs::write(dir.path().join("run.txt"), run).unwrap();
    dir
}

fn run_cfg(gamma: &str, risk: &str) -> String {
    format!("[utility]\n{gamma}\n[risk]\n{risk}\n[run]\nmarket = market.txt\npaths = 4000\npi_grid = 11\nv_grid = 11\n")
}

fn jumprisk(dir: &Path, args: &[&str]) -> Output {
    let out = dir.join("out");
    Command::new(env!("CARGO_BIN_EXE_jumprisk"))
        .args(args)
        .arg("--config")
        .arg(dir.join("run.txt"))
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn linear_var_solve_writes_outputs() {
    let dir = setup(&run_cfg("gamma = 1", "kind = var\nbeta = 0.05\nkappa = 0.2"));
    let o = jumprisk(dir.path(), &["solve"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = fs::read_to_string(dir.path().join("out/report.csv")).unwrap();
    assert!(report.starts_with("name,value,lhs,rhs,holds\nj_star,"));
    let strategy = fs::read_to_string(dir.path().join("out/strategy.csv")).unwrap();
    assert!(strategy.starts_with("t,y_1,pi_1,v\n"));
    assert_eq!(strategy.lines().count(), 34);
}

#[test]
fn bank_account_passes_verification() {
    let dir = setup(&run_cfg("gamma = 0.5", "kind = none"));
    let n = 33;
    let mut s = String::from("t,pi_1,v\n");
    for k in 0..n {
        s.push_str(&format!("{},0,0\n", k as f64 / (n - 1) as f64));
    }
    fs::write(dir.path().join("bank.csv"), s).unwrap();
    let strat = dir.path().join("bank.csv");
    let o = jumprisk(dir.path(), &["verify", "--strategy", strat.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = fs::read_to_string(dir.path().join("out/verify.csv")).unwrap();
    assert!(v.starts_with("name,lhs,rhs,tolerance,pass\n"));
    assert!(!v.contains("false"));
}

#[test]
fn infeasible_strategy_fails_verification() {
    let dir = setup(&run_cfg("gamma = 0.5", "kind = none"));
    let mut s = String::from("t,pi_1,v\n");
    for k in 0..33 {
        s.push_str(&format!("{},1.5,0.1\n", k as f64 / 32.0));
    }
    fs::write(dir.path().join("lev.csv"), s).unwrap();
    let strat = dir.path().join("lev.csv");
    let o = jumprisk(dir.path(), &["verify", "--strategy", strat.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    let v = fs::read_to_string(dir.path().join("out/verify.csv")).unwrap();
    assert!(v.contains("admissible") && v.contains("false"));
}

#[test]
fn malformed_config_exits_one_without_output() {
    let dir = setup("[utility]\ngamma = 0.5\n[run]\nmarket = market.txt\npaths = many\n");
    let o = jumprisk(dir.path(), &["solve", "--dump-config"]);
    assert_eq!(code(&o), 1);
    assert!(!dir.path().join("out").exists());

    let dir = setup(&run_cfg("gamma = 0.5", "kind = none"));
    fs::write(dir.path().join("market.txt"), MARKET.replace("sigma = 0.3", "sigma = -0.3, 1")).unwrap();
    assert_eq!(code(&jumprisk(dir.path(), &["solve"])), 1);
    assert!(!dir.path().join("out").exists());
}

#[test]
fn missing_config_and_bad_flags_exit_one() {
    let o = Command::new(env!("CARGO_BIN_EXE_jumprisk")).arg("solve").output().unwrap();
    assert_eq!(code(&o), 1);
    let o = Command::new(env!("CARGO_BIN_EXE_jumprisk")).args(["solve", "--bogus"]).output().unwrap();
    assert_eq!(code(&o), 1);
}

#[test]
fn violated_condition_exits_two_with_reason() {
    let dir = setup(&run_cfg("gamma = 0.5", "kind = var\nbeta = 0.05\nkappa = 0.2"));
    let o = jumprisk(dir.path(), &["solve"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("condition_violated"));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn compare_header() {
    let dir = setup(&run_cfg("gamma = 0.5", "kind = none"));
    let o = jumprisk(dir.path(), &["compare"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let c = fs::read_to_string(dir.path().join("out/compare.csv")).unwrap();
    assert!(c.starts_with("t,pi_jump,pi_diffusion,v_jump,v_diffusion\n"));
    assert_eq!(c.lines().count(), 34);
}

#[test]
fn dumped_config_reproduces_the_run() {
    let dir = setup(&run_cfg("gamma1 = 0.3\ngamma2 = 0.7", "kind = es\nbeta = 0.05\nkappa = 0.2"));
    let o = jumprisk(dir.path(), &["solve", "--dump-config", "--seed", "9"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let first = fs::read_to_string(dir.path().join("out/strategy.csv")).unwrap();
    let dumped = fs::read_to_string(dir.path().join("out/config.txt")).unwrap();
    assert!(dumped.contains("seed = 9"));
    fs::write(dir.path().join("run.txt"), dumped).unwrap();
    let o = jumprisk(dir.path(), &["solve"]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read_to_string(dir.path().join("out/strategy.csv")).unwrap(), first);
}

#[test]
fn simulate_summary_is_ordered() {
    let dir = setup(&run_cfg("gamma = 1", "kind = var\nbeta = 0.05\nkappa = 0.2"));
    let o = jumprisk(dir.path(), &["simulate", "--paths", "2000"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = fs::read_to_string(dir.path().join("out/simulate.csv")).unwrap();
    let mut lines = s.lines();
    assert_eq!(lines.next(), Some("node,t,mean,q_beta,es_beta"));
    for line in lines {
        let f: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert!(f[4] <= f[3] + 1e-12 && f[3] <= f[2] + 1e-12, "{line}");
    }
}

#[test]
fn certify_reports_activity() {
    let dir = setup(&run_cfg("gamma = 0.5", "kind = var\nbeta = 0.05\nkappa = 0.2"));
    let o = jumprisk(dir.path(), &["certify"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let c = fs::read_to_string(dir.path().join("out/certificate.csv")).unwrap();
    assert!(c.contains("active,1.0"));
}
