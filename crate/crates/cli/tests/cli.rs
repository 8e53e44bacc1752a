use std::path::Path;
use std::process::{Command, Output};

use cotlab_cli::commands::SWEEP_HEADER;
use cotlab_cli::csv;
use cotlab_core::bounds::{geometric_sweep, SweepConfig};
use cotlab_core::fixtures::{make_fixture, Fixture};
use cotlab_core::ModelSpec;

fn cotlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cotlab"))
        .args(args)
        .env_remove("COTLAB_THREADS")
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn successful_run_exits_zero() {
    let out = cotlab(&["verify", "--fixture", "TINY-A", "--n", "1,2", "--seeds", "1,2"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let records = csv::parse(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(records.len(), 5);
}

#[test]
fn usage_errors_exit_one() {
    for args in [
        vec!["no-such-command"],
        vec!["sweep-n", "--fixture", "TINY-B", "--seeds", "1", "--delta", "0.25"],
        vec!["verify", "--fixture", "NOPE", "--n", "1", "--seeds", "1"],
        vec!["sweep-n", "--fixture", "TINY-B", "--n", "1", "--seeds", "1", "--delta", "0.7"],
        vec!["verify", "--n", "1", "--seeds", "1"],
    ] {
        let out = cotlab(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}: {}", stderr(&out));
    }
}

#[test]
fn errors_name_the_offending_field() {
    let out = cotlab(&["sweep-n", "--fixture", "TINY-B", "--seeds", "1", "--delta", "0.25"]);
    assert!(stderr(&out).contains("`n`"), "{}", stderr(&out));
    let out = cotlab(&["sweep-n", "--fixture", "TINY-B", "--n", "1", "--seeds", "1", "--delta", "0.9"]);
    assert!(stderr(&out).contains("`delta`"), "{}", stderr(&out));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"seeds": [1], "deltta": 0.2}"#).unwrap();
    let out = cotlab(&["verify", "--fixture", "TINY-B", "--n", "1", "--config", path_str(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("deltta"), "{}", stderr(&out));
}

#[test]
fn bad_thread_count_is_rejected() {
    let out = Command::new(env!("CARGO_BIN_EXE_cotlab"))
        .args(["verify", "--fixture", "TINY-A", "--n", "1", "--seeds", "1"])
        .env("COTLAB_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("COTLAB_THREADS"));
}

#[test]
fn config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"seeds": [4], "n": [2], "mode": "verify"}"#).unwrap();
    let out = cotlab(&["verify", "--fixture", "TINY-B", "--n", "1,2,3", "--seeds", "1,2", "--config", path_str(&cfg)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let records = csv::parse(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(records.len(), 2);
    let header = &records[0];
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    assert_eq!(records[1][col("N")], "2");
    assert_eq!(records[1][col("seed")], "4");

    let out = cotlab(&["sweep-n", "--fixture", "TINY-B", "--n", "1", "--delta", "0.2", "--config", path_str(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("`mode`"));
}

#[test]
fn sweep_csv_reloads_to_library_values() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("sweep.csv");
    let svg_path = dir.path().join("sweep.svg");
    let out = cotlab(&[
        "sweep-n",
        "--fixture",
        "TINY-B",
        "--n",
        "1,2,3,4",
        "--seeds",
        "1,2,3",
        "--delta",
        "0.25",
        "--out",
        path_str(&out_path),
        "--svg",
        path_str(&svg_path),
        "--log-y",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(std::fs::read_to_string(&svg_path).unwrap().starts_with("<svg"));

    let records = csv::parse(&std::fs::read_to_string(&out_path).unwrap());
    assert_eq!(records[0], SWEEP_HEADER.to_vec());
    let expected = geometric_sweep(&make_fixture(Fixture::TinyB), &SweepConfig::new(vec![1, 2, 3, 4], vec![1, 2, 3], 0.25)).unwrap();
    assert_eq!(records.len() - 1, expected.len());
    let f = |s: &str| s.parse::<f64>().unwrap().to_bits();
    for (rec, row) in records[1..].iter().zip(&expected) {
        assert_eq!(rec[0].parse::<usize>().unwrap(), row.n);
        assert_eq!(f(&rec[1]), row.max_gap.to_bits());
        assert_eq!(f(&rec[2]), row.rhs_uniform.to_bits());
        assert_eq!(f(&rec[3]), row.eta_rho_pow_n.to_bits());
        assert_eq!(rec[4], row.condition1_satisfied.to_string());
        assert_eq!(rec[5].parse::<u64>().unwrap(), row.seed);
        assert_eq!(f(&rec[6]), row.rhs_nonuniform.to_bits());
        assert_eq!(f(&rec[7]), row.eta.to_bits());
        assert_eq!(f(&rec[8]), row.eta_hat.to_bits());
        assert_eq!(rec[9], row.bound_holds.to_string());
    }
}

#[test]
fn unreachable_trajectory_is_reported() {
    let out = cotlab(&["lemma-threshold", "--fixture", "TINY-B", "--seeds", "1", "--delta", "0.25", "--min-len", "1000", "--retry-budget", "1"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    let records = csv::parse(&text);
    assert_eq!(records.len(), 2);
    let col = records[0].iter().position(|h| h == "m_star").unwrap();
    assert_eq!(records[1][col], "NO_TRAJECTORY");
}

#[test]
fn generated_model_loads_back() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    let out = cotlab(&["gen-model", "--sizes", "2,3,4", "--alpha", "0.5", "--family", "markov", "--model-seed", "3", "--out", path_str(&model)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let spec = ModelSpec::from_json(&std::fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(spec.n_contexts(), 2);
    let out = cotlab(&["ambiguity", "--model", path_str(&model), "--seeds", "1,2"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(csv::parse(&String::from_utf8(out.stdout).unwrap()).len(), 3);
}
