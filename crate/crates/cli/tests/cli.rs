use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn privtree(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_privtree"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Vec<u8> {
    let out = privtree(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out.stdout
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn analyze_is_byte_identical_across_runs_and_thread_counts() {
    let dir = TempDir::new().unwrap();
    let mut reports = Vec::new();
    for (run, threads) in [("a", "1"), ("b", "1"), ("c", "4")] {
        let out = dir.path().join(run);
        let out = out.to_str().unwrap();
        ok(&[
            "analyze",
            "--builtin",
            "fibonacci",
            "--window",
            "600",
            "--depth",
            "5",
            "--s-max",
            "400",
            "--threads",
            threads,
            "--out-dir",
            out,
        ]);
        reports.push(fs::read(dir.path().join(run).join("analysis.json")).unwrap());
    }
    assert!(!reports[0].is_empty());
    assert_eq!(reports[0], reports[1]);
    assert_eq!(reports[0], reports[2]);
}

#[test]
fn tree_dot_lists_each_vertex_once() {
    let dot = String::from_utf8(ok(&[
        "tree",
        "--builtin",
        "fibonacci",
        "--depth",
        "2",
        "--window",
        "200",
        "--dot",
    ]))
    .unwrap();
    let nodes = dot.lines().filter(|l| l.contains("[label=")).count();
    let edges = dot.lines().filter(|l| l.contains("->")).count();
    assert_eq!(nodes, 1 + 2 + 6);
    assert_eq!(edges, nodes - 1);
    assert!(dot.starts_with("digraph"));
}

#[test]
fn tree_json_parses() {
    let text = ok(&[
        "tree",
        "--builtin",
        "thue_morse",
        "--depth",
        "3",
        "--window",
        "300",
        "--json",
    ]);
    let doc: serde_json::Value = serde_json::from_slice(&text).unwrap();
    assert!(doc.is_object());
}

#[test]
fn metrics_pairs_writes_one_row_per_pair() {
    let dir = TempDir::new().unwrap();
    let pairs = write(
        dir.path(),
        "pairs.json",
        "[[[0],[5]],[[3],[40]],[[-7],[-2]]]",
    );
    let csv = String::from_utf8(ok(&[
        "metrics",
        "--builtin",
        "fibonacci",
        "--depth",
        "5",
        "--window",
        "500",
        "--pairs",
        &pairs,
    ]))
    .unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("x,y,depth,branch_order,d_inf,d_sup,d_sup_tail,flag")
    );
    assert_eq!(lines.count(), 3);
}

#[test]
fn metrics_ratio_table_has_a_row_per_depth() {
    let csv = String::from_utf8(ok(&[
        "metrics",
        "--builtin",
        "fibonacci",
        "--depth",
        "4",
        "--window",
        "400",
    ]))
    .unwrap();
    assert!(csv.starts_with("depth,alpha,C_N"));
    assert_eq!(csv.lines().count(), 1 + 4);
}

#[test]
fn seeded_graphs_repeat() {
    let dir = TempDir::new().unwrap();
    let pairs = write(dir.path(), "pairs.json", "[[[2],[30]]]");
    let args = [
        "graph",
        "--builtin",
        "fibonacci",
        "--depth",
        "4",
        "--window",
        "300",
        "--strategy",
        "avoid",
        "--seed",
        "7",
        "--pairs",
        &pairs,
    ];
    let first = ok(&args);
    assert_eq!(first, ok(&args));
    let random = [
        "graph",
        "--builtin",
        "fibonacci",
        "--depth",
        "4",
        "--window",
        "300",
        "--strategy",
        "random:11",
    ];
    assert_eq!(ok(&random), ok(&random));
    let dot = String::from_utf8(ok(&[
        "graph",
        "--builtin",
        "fibonacci",
        "--depth",
        "3",
        "--window",
        "300",
        "--format",
        "dot",
    ]))
    .unwrap();
    assert!(dot.starts_with("graph") || dot.starts_with("digraph"));
}

#[test]
fn periodic_configs_are_rejected() {
    let dir = TempDir::new().unwrap();
    let config = write(
        dir.path(),
        "periodic.json",
        r#"{"kind": "substitution", "alphabet": ["a", "b"], "images": {"a": "ab", "b": "ab"}, "window": [[-200, 200]]}"#,
    );
    let out = privtree(&["analyze", "--config", &config, "--depth", "3"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn usage_errors_fail() {
    assert!(!privtree(&[]).status.success());
    assert!(!privtree(&["tree"]).status.success());
    assert!(
        !privtree(&["tree", "--builtin", "fibonacci", "--depth", "0"])
            .status
            .success()
    );
    assert!(!privtree(&["tree", "--builtin", "no_such_system"])
        .status
        .success());
    assert!(
        !privtree(&["tree", "--builtin", "fibonacci", "--window", "1:2,3:4"])
            .status
            .success()
    );
    assert!(!privtree(&[
        "analyze",
        "--builtin",
        "fibonacci",
        "--format",
        "dot",
        "--window",
        "200"
    ])
    .status
    .success());
}
