use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn factsflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_factsflow"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = factsflow(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn objective(stdout: &str) -> f64 {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix("objective "))
        .expect("objective line")
        .parse()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn tri_f_values_and_solution_files_validate() {
    let dir = TempDir::new().unwrap();
    let net = data("tri_f.json");
    let cases: [(&str, Vec<&str>, f64); 5] = [
        ("mpf", vec![], 12.0),
        ("mvf", vec!["--signs", "111"], 14.0),
        ("im", vec![], 14.0),
        ("mff", vec!["--gap", "0"], 14.0),
        ("mpf", vec!["--at", "upper"], 14.0),
    ];
    for (k, (cmd, extra, expected)) in cases.into_iter().enumerate() {
        let sol = dir.path().join(format!("{cmd}{k}.json"));
        let mut args = vec![cmd, s(&net), "-o", s(&sol)];
        args.extend(extra);
        let value = objective(&ok(&args));
        assert!((value - expected).abs() < 1e-6, "{cmd}: {value}");
        assert!(ok(&["validate", s(&net), s(&sol)]).starts_with("valid"));
    }
}

#[test]
fn validate_rejects_a_capacity_violation() {
    let dir = TempDir::new().unwrap();
    let net = data("tri_f.json");
    let sol = dir.path().join("mff.json");
    ok(&["mff", s(&net), "-o", s(&sol)]);
    let mut doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&sol).unwrap()).unwrap();
    for key in ["theta", "flow", "gen", "load"] {
        for v in doc[key].as_array_mut().unwrap() {
            *v = serde_json::json!(v.as_f64().unwrap() * 2.0);
        }
    }
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, doc.to_string()).unwrap();
    let out = factsflow(&["validate", s(&net), s(&bad)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("capacity"));
}

#[test]
fn mff_keeps_a_warm_start_and_dumps_its_relaxation() {
    let dir = TempDir::new().unwrap();
    let net = data("tri_f.json");
    let warm = dir.path().join("warm.json");
    let lp = dir.path().join("root.lp");
    ok(&["im", s(&net), "-o", s(&warm)]);
    let out = ok(&[
        "mff",
        s(&net),
        "--warm-start",
        s(&warm),
        "--node-limit",
        "1",
        "--dump-lp",
        s(&lp),
    ]);
    assert!(objective(&out) >= 14.0 - 1e-9);
    let text = std::fs::read_to_string(&lp).unwrap();
    assert!(text.starts_with("Maximize") && text.contains("Binaries"));
}

#[test]
fn im_trace_lists_every_start() {
    let dir = TempDir::new().unwrap();
    let trace = dir.path().join("trace.json");
    ok(&[
        "im",
        s(&data("tri_f.json")),
        "--starts",
        "lower,upper,mid,random",
        "--seed",
        "3",
        "--trace",
        s(&trace),
    ]);
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&trace).unwrap()).unwrap();
    let runs = doc.as_array().unwrap();
    assert_eq!(runs.len(), 4);
    assert_eq!(runs[0]["trace"]["steps"][0]["phase"], "MPF");
}

#[test]
fn convert_respects_the_parallel_policy() {
    let dir = TempDir::new().unwrap();
    let text = std::fs::read_to_string(data("six_bus.m")).unwrap().replace(
        "\t1\t5\t0.03",
        "\t1\t2\t0.01\t0.10\t0\t90\t90\t90\t0\t0\t1\t-360\t360;\n\t1\t5\t0.03",
    );
    let case = dir.path().join("parallel.m");
    std::fs::write(&case, text).unwrap();
    let out = factsflow(&["convert", s(&case)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    let net = dir.path().join("net.json");
    ok(&["convert", s(&case), "--parallel", "merge", "-o", s(&net)]);
    assert!(objective(&ok(&["mpf", s(&net)])) > 0.0);
}

#[test]
fn scenario_tables_are_reproducible() {
    let dir = TempDir::new().unwrap();
    let net = dir.path().join("six.json");
    ok(&["convert", s(&data("six_bus.m")), "-o", s(&net)]);
    let run = |name: &str, jobs: &str| {
        let csv = dir.path().join(name);
        ok(&[
            "scenario",
            s(&net),
            "--trials",
            "3",
            "--seed",
            "7",
            "--facts-frac",
            "0.5",
            "--gen-factor",
            "1.5",
            "--load-factor",
            "1.5",
            "--remove-lines",
            "1",
            "--jobs",
            jobs,
            "-o",
            s(&csv),
        ]);
        std::fs::read(csv).unwrap()
    };
    let a = run("a.csv", "1");
    assert_eq!(a, run("b.csv", "1"));
    assert_eq!(a, run("c.csv", "3"));
    let text = String::from_utf8(a).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("scenario,seed,mpf,im,mff,gap,mf,improvement_pct,im_calls,mff_nodes")
    );
    for row in lines {
        let cells: Vec<&str> = row.split(',').collect();
        assert_eq!(cells.len(), 10);
        let v = |i: usize| cells[i].parse::<f64>().unwrap();
        assert!(v(2) <= v(3) + 1e-6 && v(3) <= v(4) + 1e-6 && v(4) <= v(6) + 1e-6);
        assert_eq!(cells[2].split('.').nth(1).map(str::len), Some(6));
    }
}

#[test]
fn scenario_keeps_rows_written_before_a_failure() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("out.csv");
    // Removing more lines than exist fails every trial.
    let out = factsflow(&[
        "scenario",
        s(&data("tri_f.json")),
        "--remove-lines",
        "99",
        "-o",
        s(&csv),
    ]);
    assert!(!out.status.success());
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 1, "header only");
}

#[test]
fn exact_cover_encoding_reaches_its_target() {
    let dir = TempDir::new().unwrap();
    let net = dir.path().join("cover.json");
    let out = factsflow(&["encode", "exact-cover", s(&data("cover.json")), "-o", s(&net)]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("target 639/10"));
    let value = objective(&ok(&["mff", s(&net), "--gap", "1e-9"]));
    assert!((value - 63.9).abs() < 1e-6);
}

#[test]
fn bad_inputs_fail_with_a_message() {
    let out = factsflow(&["mpf", "/nonexistent/net.json"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    let out = factsflow(&["mvf", s(&data("tri_f.json")), "--signs", "1x1"]);
    assert!(!out.status.success());
}

#[test]
fn max_flow_prints_the_ceiling() {
    let value = objective(&ok(&["mf", s(&data("tri_f.json"))]));
    assert!((value - 14.0).abs() < 1e-9);
}
