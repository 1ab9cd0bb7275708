use std::fs;
use std::process::{Command, Output};

use tempfile::TempDir;

fn sfpca(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sfpca")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL: &str = "\
[model]
kind = sparse
eigenvalues = 1, 0.5

[sweep]
n = 40
p = 16
d = 2
m = 4
s = 1
sigma = 0.5
replicates = 2
seed = 3
";

#[test]
fn sweep_writes_one_row_per_replicate() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("small.ini");
    let out = dir.path().join("rates.csv");
    fs::write(&cfg, SMALL).unwrap();
    let o = sfpca(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("n,p,D,M,s,sigma,seed"));
    assert!(lines[1..].iter().all(|l| l.ends_with(",ok")));
}

#[test]
fn rates_reports_inverse_slope() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("fixture.csv");
    let mut text = String::from(
        "n,p,D,M,s,sigma,seed,lambda,T,eta,err_g,err_f,err_f_pca,iterations,stationarity_gap,oracle_satisfied,wall_ms,replicate,status\n",
    );
    for n in [100, 200, 400, 800] {
        let e = 3.0 / n as f64;
        text.push_str(&format!("{n},16,1,4,1,0.5,0,0,1,1,{e},{e},{e},1,0,true,0,0,ok\n"));
    }
    fs::write(&csv, text).unwrap();
    let o = sfpca(&["rates", csv.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().next(), Some("slope -1.00"));
}

#[test]
fn diagnose_brownian_has_no_noise_remainder() {
    let o = sfpca(&["diagnose", "--m", "4", "--p", "64"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let line = out.lines().find(|l| l.starts_with("max_RN")).unwrap();
    let v: f64 = line.split('=').nth(1).unwrap().trim().parse().unwrap();
    assert_eq!(v, 0.0);
    assert!(out.contains("RK_within_bound = true"));
}

#[test]
fn bad_config_exits_with_two() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.ini");
    fs::write(&cfg, "[sweep]\nm = 5\np = 16\n").unwrap();
    let o = sfpca(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    fs::write(&cfg, "[sweep]\nwidth = 3\n").unwrap();
    assert_eq!(sfpca(&["sweep", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(sfpca(&["sweep", "--bogus"]).status.code(), Some(2));
}

#[test]
fn selftest_passes() {
    let o = sfpca(&["selftest"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(!stdout(&o).contains("FAIL"));
}
