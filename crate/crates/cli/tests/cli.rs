use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use apac_core::frontend::lexer::token_stream;

fn apac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_apac")).args(args).output().expect("binary runs")
}

fn corpus(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(rel)
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn transform_writes_listing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out.cpp");
    let input = corpus("golden/code1.cpp");
    let before = std::fs::read(&input).unwrap();
    let o = apac(&["transform", path(&input), "--strategy", "none", "-o", path(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let written = std::fs::read_to_string(&out).unwrap();
    let expected = std::fs::read_to_string(corpus("golden/code1.expected.cpp")).unwrap();
    assert_eq!(token_stream(&written).unwrap(), token_stream(&expected).unwrap());
    assert_eq!(std::fs::read(&input).unwrap(), before);
}

#[test]
fn transform_of_empty_file_adds_only_header() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("empty.cpp");
    std::fs::write(&input, "").unwrap();
    let o = apac(&["transform", path(&input)]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("// "));
}

#[test]
fn transform_refuses_to_overwrite_input() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("a.cpp");
    std::fs::write(&input, "int main() {\n    return 0;\n}\n").unwrap();
    let o = apac(&["transform", path(&input), "-o", path(&input)]);
    assert_eq!(o.status.code(), Some(64));
    assert_eq!(std::fs::read_to_string(&input).unwrap(), "int main() {\n    return 0;\n}\n");
}

#[test]
fn several_inputs_go_to_a_directory() {
    let dir = tempfile::tempdir().unwrap();
    let a = corpus("stf/fib.cpp");
    let b = corpus("stf/bank.cpp");
    let o = apac(&["transform", path(&a), path(&b), "-o", path(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("fib.cpp").exists());
    assert!(dir.path().join("bank.cpp").exists());
    let not_dir = dir.path().join("missing");
    assert_eq!(apac(&["transform", path(&a), path(&b), "-o", path(&not_dir)]).status.code(), Some(64));
}

#[test]
fn syntax_errors_are_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.cpp");
    std::fs::write(&input, "int main( {\n").unwrap();
    let o = apac(&["transform", path(&input)]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.cpp:1:"), "{err}");
    assert!(err.contains(": error: "));
}

#[test]
fn usage_errors() {
    assert_eq!(apac(&["frobnicate"]).status.code(), Some(64));
    assert_eq!(apac(&["transform", "x.cpp", "--strategy", "depth"]).status.code(), Some(64));
    assert_eq!(apac(&["check", "x.cpp", "--schedules", "some"]).status.code(), Some(64));
    assert_eq!(apac(&["--help"]).status.code(), Some(0));
}

#[test]
fn check_passes_and_fails() {
    let f = corpus("stf/code4_main.cpp");
    let ok = apac(&["check", path(&f), "--entry", "main", "--schedules", "all"]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(stdout(&ok).lines().all(|l| l.starts_with("PASS")));
    let bad = apac(&["check", path(&f), "--schedules", "all", "--drop-sync", "main:0"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(stdout(&bad).lines().any(|l| l.starts_with("FAIL schedule")));
    assert!(stdout(&bad).lines().last().unwrap().starts_with("FAIL:"));
}

#[test]
fn check_is_deterministic() {
    let f = corpus("stf/mergesort.cpp");
    let a = apac(&["check", path(&f), "--schedules", "random:25", "--seed", "11", "--json"]);
    let b = apac(&["check", path(&f), "--schedules", "random:25", "--seed", "11", "--json"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["schedules"], 25);
    assert_eq!(v["divergent"], 0);
}

#[test]
fn graph_dot_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let dot = dir.path().join("g.dot");
    let f = corpus("stf/code3_main.cpp");
    let o = apac(&["graph", path(&f), "--entry", "main", "--dot", path(&dot), "--json", "--strategy", "none"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["tasks"], 3);
    let text = std::fs::read_to_string(&dot).unwrap();
    assert!(text.contains("work@17:9 depth=1"));
    assert!(text.contains("label=\"RAW\""));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("apac.conf");
    std::fs::write(&cfg, "strategy = depth:0\nworkers = 2\n").unwrap();
    let f = corpus("stf/fib.cpp");
    let from_file = apac(&["graph", path(&f), "--config", path(&cfg), "--json"]);
    let v: serde_json::Value = serde_json::from_slice(&from_file.stdout).unwrap();
    assert_eq!(v["nodes"], 1);
    assert_eq!(v["workers"], 2);
    let overridden = apac(&["graph", path(&f), "--config", path(&cfg), "--strategy", "none", "--json"]);
    let v: serde_json::Value = serde_json::from_slice(&overridden.stdout).unwrap();
    assert!(v["nodes"].as_u64().unwrap() > 1);
    std::fs::write(&cfg, "colour = blue\n").unwrap();
    assert_eq!(apac(&["graph", path(&f), "--config", path(&cfg)]).status.code(), Some(64));
}

#[test]
fn excluded_function_is_not_taskified() {
    let f = corpus("stf/code4_main.cpp");
    let o = apac(&["transform", path(&f), "--exclude", "f"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(!stdout(&o).contains("#pragma omp task "));
}

#[test]
fn analyze_json_lists_functions() {
    let o = apac(&["analyze", path(&corpus("stf/code3_main.cpp")), "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let main = v.as_array().unwrap().iter().find(|f| f["name"] == "main").unwrap();
    assert_eq!(main["taskgroup"], true);
    assert_eq!(main["calls"][0]["inout"][0], "var1");
}
