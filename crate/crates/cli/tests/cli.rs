use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn relins(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relins"))
        .args(args)
        .env("REL_QUIET", "1")
        .output()
        .expect("binary runs")
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

const SMALL_SWEEP: &str = r#"
schema_version = 1

[market]
capacity_cost = 1.0
periods = 2

[market.supply]
kind = "trunc_normal"
mu = 0.5
sigma = 0.25

[[market.types]]
voll = 15.0
demand = 10.0

[[market.types]]
voll = 25.0
demand = 10.0

[sweep]
kind = "price"
p_min = 0.5
p_max = 3.0
steps = 11
"#;

#[test]
fn unknown_subcommand_is_usage_error() {
    let out = relins(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn solve_deterministic_toy_prints_zero_premiums() {
    let out = relins(&["solve", config("deterministic_toy.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("total_premium = 0.0"), "{text}");
    assert!(text.contains("type_1 = [0.0]"));
    assert!(text.contains("type_2 = [0.0]"));
}

#[test]
fn solve_with_monte_carlo_is_seeded() {
    let cfg = config("deterministic_toy.toml");
    let a = relins(&["--seed", "5", "solve", cfg.to_str().unwrap(), "--mc-days", "1000"]);
    let b = relins(&["--seed", "5", "solve", cfg.to_str().unwrap(), "--mc-days", "1000"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert!(String::from_utf8_lossy(&a.stdout).contains("[monte_carlo]"));
}

#[test]
fn sweep_rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", SMALL_SWEEP);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = relins(&["sweep", cfg.to_str().unwrap(), "--output", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let text = fs::read(&a).unwrap();
    assert_eq!(text, fs::read(&b).unwrap());
    assert_eq!(String::from_utf8(text).unwrap().lines().count(), 12);
    assert!(dir.path().join("a.csv.meta.toml").exists());
}

#[test]
fn thresholds_need_a_price_and_are_stable_under_node_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", SMALL_SWEEP);
    let a = relins(&["thresholds", cfg.to_str().unwrap()]);
    // no market.price in this config
    assert_eq!(a.status.code(), Some(4));
    let with_price = SMALL_SWEEP.replace("periods = 2", "periods = 2\nprice = 1.5");
    let cfg = write(dir.path(), "p.toml", &with_price);
    let a = relins(&["thresholds", cfg.to_str().unwrap()]);
    let b = relins(&["--quadrature-nodes", "64", "thresholds", cfg.to_str().unwrap()]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(b.status.code(), Some(0));
    let lower = |o: &Output| -> f64 {
        let text = String::from_utf8_lossy(&o.stdout).to_string();
        let line = text
            .lines()
            .find(|l| l.starts_with("lower_threshold"))
            .unwrap()
            .to_string();
        line.split('=').nth(1).unwrap().trim().parse().unwrap()
    };
    assert!((lower(&a) - lower(&b)).abs() < 1e-9);
}

#[test]
fn error_classes_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad_syntax = write(dir.path(), "bad.toml", "schema_version = ");
    assert_eq!(relins(&["solve", bad_syntax.to_str().unwrap()]).status.code(), Some(3));

    let bad_schema = write(dir.path(), "schema.toml", "schema_version = 1\n");
    assert_eq!(relins(&["solve", bad_schema.to_str().unwrap()]).status.code(), Some(4));

    let toy = fs::read_to_string(config("deterministic_toy.toml")).unwrap();
    let infeasible = write(
        dir.path(),
        "inf.toml",
        &toy.replace("profit_floor = 0.0", "profit_floor = 1e9"),
    );
    assert_eq!(relins(&["solve", infeasible.to_str().unwrap()]).status.code(), Some(6));

    let missing = dir.path().join("missing.toml");
    assert_eq!(relins(&["solve", missing.to_str().unwrap()]).status.code(), Some(5));

    let cfg = write(dir.path(), "s.toml", SMALL_SWEEP);
    let blocker = write(dir.path(), "file", "");
    let out = blocker.join("x.csv");
    assert_eq!(
        relins(&["sweep", cfg.to_str().unwrap(), "--output", out.to_str().unwrap()])
            .status
            .code(),
        Some(5)
    );
}

#[test]
fn verify_small_battery_passes() {
    let out = relins(&["--seed", "3", "verify", "--count", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.ends_with(",pass")).count(), 3);
}
