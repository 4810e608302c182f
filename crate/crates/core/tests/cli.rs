use std::path::Path;
use std::process::{Command, Output};

use bec_transport::config::ExperimentConfig;

fn bin(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bec-transport")).current_dir(dir).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&bin(dir.path(), &["no-such-command"])), 2);
    assert_eq!(code(&bin(dir.path(), &["simulate", "--method", "cubic"])), 2);
}

#[test]
fn bias_outside_map_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(dir.path(), &["--out", "o", "characterize", "--bias", "30"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn bad_config_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), "schema_version = 1\n\n[ramp]\nfinal_time = 0.15\n").unwrap();
    let o = bin(dir.path(), &["--config", "c.toml", "show-config"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("c.toml") && stderr(&o).contains('4'), "{}", stderr(&o));
    std::fs::write(dir.path().join("v.toml"), "schema_version = 7\n").unwrap();
    assert_eq!(code(&bin(dir.path(), &["--config", "v.toml", "show-config"])), 2);
}

#[test]
fn missing_ramp_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&bin(dir.path(), &["--out", "o", "simulate", "--ramp", "nope.txt"])), 2);
    assert_eq!(code(&bin(dir.path(), &["--out", "o", "gpe-verify", "--ramp", "nope.txt"])), 2);
}

#[test]
fn show_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(dir.path(), &["--seed", "9", "show-config"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let cfg = ExperimentConfig::from_toml(&text, Path::new("stdout")).unwrap();
    assert_eq!(cfg.seed, 9);
    std::fs::write(dir.path().join("c.toml"), &text).unwrap();
    let again = bin(dir.path(), &["--config", "c.toml", "show-config"]);
    assert_eq!(String::from_utf8(again.stdout).unwrap(), text);
}

#[test]
fn tabulated_map_reproduces_endpoints() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("map.txt"), bec_transport::trap::endpoint_anchor_table()).unwrap();
    let cfg = "schema_version = 1\n[trap]\nsource = \"table\"\ntable = \"map.txt\"\n";
    std::fs::write(dir.path().join("c.toml"), cfg).unwrap();
    let o = bin(dir.path(), &["--config", "c.toml", "--out", "o", "characterize"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("o/endpoints.csv")).unwrap();
    for row in csv.lines().skip(1) {
        for err in row.split(',').skip(9) {
            assert!(err.parse::<f64>().unwrap().abs() <= 4.0 * f64::EPSILON, "{row}");
        }
    }
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for (out, threads) in [("a", "1"), ("b", "4")] {
        let o = bin(dir.path(), &["--out", out, "--threads", threads, "simulate"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for file in ["history.csv", "ramp.txt", "summary.txt"] {
        let a = std::fs::read(dir.path().join("a").join(file)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(file)).unwrap();
        assert!(!a.is_empty() && a == b, "{file} differs between runs");
    }
}

#[test]
fn short_optimization_writes_its_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "schema_version = 1\n[ramp]\nnode_count = 256\nhold_time_ms = 10\n\
               [optimize]\nmax_iterations = 5\n[optimize.warm_start]\nepsilon = 1e-13\nmax_iterations = 0\n\
               weights = { lambda1 = 1.0, lambda2 = 5e5, lambda3 = 1e-3 }\n";
    std::fs::write(dir.path().join("c.toml"), cfg).unwrap();
    let o = bin(dir.path(), &["--config", "c.toml", "--out", "o", "optimize", "--init", "linear"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for file in ["ramp.txt", "convergence.csv", "history.csv", "summary.txt"] {
        assert!(dir.path().join("o").join(file).is_file(), "missing {file}");
    }
    let conv = std::fs::read_to_string(dir.path().join("o/convergence.csv")).unwrap();
    assert_eq!(conv.lines().count(), 1 + 6, "{conv}");
    // the written ramp feeds back into simulate
    let o = bin(dir.path(), &["--config", "c.toml", "--out", "s", "simulate", "--ramp", "o/ramp.txt"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}
