use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mfci(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mfci"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &str = "\
synth.nodes = 10
synth.p = 0.6
synth.cells = 3
synth.samples = 12
synth.noise_std = 0.01
k = 3
mfci.l = 2
mfci.l_prime = 1
seeds = 1,2,3
output.dir = out
";

#[test]
fn synth_then_eval_reports_small_loss() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("cfg.txt"), SMALL).unwrap();
    let o = mfci(tmp.path(), &["synth", "--config", "cfg.txt", "--seed", "4", "--out", "data"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["graph.txt", "flows.csv", "cells.txt", "meta.txt"] {
        assert!(tmp.path().join("data").join(f).exists(), "{f}");
    }
    let o = mfci(
        tmp.path(),
        &["eval", "--graph", "data/graph.txt", "--flows", "data/flows.csv", "--cells", "data/cells.txt"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("cells 3"), "{out}");
    let loss: f64 = out
        .lines()
        .find_map(|l| l.strip_prefix("loss "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(loss < 1.0, "{loss}");
}

#[test]
fn infer_writes_one_trace_per_seed_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("cfg.txt"), SMALL).unwrap();
    let run = |out: &str| {
        let o = mfci(tmp.path(), &["infer", "--config", "cfg.txt", "--no-timing", "--out", out]);
        assert!(o.status.success(), "{}", stderr(&o));
        (1..=3)
            .map(|s| fs::read(tmp.path().join(out).join(format!("trace_mfci_seed{s}.csv"))).unwrap())
            .collect::<Vec<_>>()
    };
    let a = run("a");
    let b = run("b");
    assert_eq!(a, b);
    assert!(tmp.path().join("a/summary.csv").exists());
}

#[test]
fn missing_flow_file_is_named_and_fails() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("g.txt"), "nodes 3\n0 1\n1 2\n0 2\n").unwrap();
    let o = mfci(tmp.path(), &["infer", "--graph", "g.txt", "--flows", "nope.csv"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("nope.csv"), "{}", stderr(&o));
}

#[test]
fn missing_config_file_is_named_and_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mfci(tmp.path(), &["infer", "--config", "absent.txt"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("absent.txt"), "{}", stderr(&o));
}

#[test]
fn bad_config_value_names_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("cfg.txt"), "mfci.method = pca\n").unwrap();
    let o = mfci(tmp.path(), &["infer", "--config", "cfg.txt"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("mfci.method"), "{}", stderr(&o));
}

#[test]
fn bench_emits_combined_csv() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("cfg.txt"), SMALL).unwrap();
    let o = mfci(
        tmp.path(),
        &["bench", "--config", "cfg.txt", "--seed", "7", "--algo", "mfci,random"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(tmp.path().join("out/bench.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("algo,seed,iteration,cells_total,loss"));
    let algos: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert!(algos.contains(&"mfci") && algos.contains(&"random"));
    assert_eq!(algos.len(), 2 * 4);
}

#[test]
fn triangle_files_infer_to_zero_loss() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("g.txt"), "nodes 3\n0 1\n1 2\n0 2\n").unwrap();
    fs::write(tmp.path().join("f.csv"), "edge_id,f0,f1\n0,1,2\n1,1,2\n2,-1,-2\n").unwrap();
    fs::write(tmp.path().join("cfg.txt"), "k = 1\nmfci.l = 1\n").unwrap();
    let o = mfci(
        tmp.path(),
        &["infer", "--config", "cfg.txt", "--graph", "g.txt", "--flows", "f.csv", "--out", "o"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let trace = fs::read_to_string(tmp.path().join("o/trace_mfci_seed0.csv")).unwrap();
    assert_eq!(trace.lines().count(), 3);
}
