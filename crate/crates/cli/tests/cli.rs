//! End-to-end runs of the `capsim` binary.

use std::path::Path;
use std::process::{Command, Output};

use capsim_cli::run::{CONCENTRATION_HEADER, DELTA_HEADER, FIELD_HEADER, THICK_HEADER, THIN_HEADER};

fn capsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_capsim")).args(args).output().expect("binary runs")
}

fn run_with(dir: &Path, cmd: &str, config: &str) -> Output {
    let cfg = dir.join("config.json");
    std::fs::write(&cfg, config).unwrap();
    let out = dir.join("out");
    capsim(&[cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join("out").join(name)).unwrap()
}

fn header(csv: &str) -> &str {
    csv.lines().next().unwrap()
}

#[test]
fn thin_run_with_zero_data_writes_zero_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_with(dir.path(), "run-thin", r#"{"problem": "thin", "mesh": {"n": 8}, "time": {"t_final": 0.05}}"#);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(dir.path(), "thin.csv");
    assert_eq!(header(&csv), THIN_HEADER);
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 6);
    for row in rows {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols.len(), 7);
        assert_eq!(cols[1], "1");
        for c in &cols[2..] {
            assert_eq!(c.parse::<f64>().unwrap(), 0.0, "{row}");
        }
    }
    let summary = String::from_utf8_lossy(&out.stdout);
    assert!(summary.starts_with("thin: 6 levels"), "{summary}");
    assert_eq!(summary.lines().count(), 1);
}

#[test]
fn thin_run_dumps_fields_and_leaves_no_temporaries() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_with(
        dir.path(),
        "run-thin",
        r#"{"problem": "thin", "mesh": {"n": 8}, "time": {"t_final": 0.04, "scheme": "picard", "window": 0.02},
            "f_expr": "1 + x*y", "u0_expr": "x - y", "output": {"field_times": [0, 0.04]}}"#,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut names: Vec<String> = std::fs::read_dir(dir.path().join("out"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names, ["field_t0.000000.csv", "field_t0.040000.csv", "thin.csv"]);
    let field = read(dir.path(), "field_t0.040000.csv");
    assert_eq!(header(&field), FIELD_HEADER);
    assert_eq!(field.lines().count(), 1 + 81);
}

#[test]
fn thick_run_has_stable_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_with(
        dir.path(),
        "run-thick",
        r#"{"problem": "thick", "mesh": {"n": 8}, "time": {"t_final": 0.02}, "u0_expr": "x^2 - y"}"#,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(dir.path(), "thick.csv");
    assert_eq!(header(&csv), THICK_HEADER);
    assert_eq!(csv.lines().count(), 1 + 3);
}

#[test]
fn studies_have_stable_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_with(
        dir.path(),
        "delta-study",
        r#"{"problem": "delta_study", "mesh": {"n": 8}, "time": {"t_final": 0.02}, "u0_expr": "x", "study": {"deltas": [0.1, 0.01]}}"#,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(dir.path(), "delta_study.csv");
    assert_eq!(header(&csv), DELTA_HEADER);
    assert!(csv.lines().last().unwrap().starts_with("0e0,0e0,"));

    let dir = tempfile::tempdir().unwrap();
    let out = run_with(
        dir.path(),
        "concentration",
        r#"{"problem": "concentration", "mesh": {"n": 16}, "time": {"t_final": 0.02}, "u0_expr": "x",
            "study": {"half_widths": [2, 1], "sample_steps": [1, 2]}}"#,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(dir.path(), "concentration.csv");
    assert_eq!(header(&csv), CONCENTRATION_HEADER);
    assert_eq!(csv.lines().count(), 1 + 4);
}

#[test]
fn mesh_subcommand_writes_a_readable_mesh() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_with(dir.path(), "mesh", r#"{"problem": "thick", "mesh": {"n": 8}}"#);
    assert!(out.status.success());
    let mesh = capsim::mesh::read_mesh(&dir.path().join("out/mesh.txt")).unwrap();
    assert!(mesh.is_thick());
    assert_eq!(mesh.node_count(), 81);
}

#[test]
fn config_errors_exit_with_2_before_solving() {
    let dir = tempfile::tempdir().unwrap();
    for config in [
        r#"{"problem": "thick", "physics": {"delta": 0}, "time": {"scheme": "explicit"}}"#,
        r#"{"problem": "thin", "f_expr": "x +* y"}"#,
        r#"{"problem": "thin", "mesh": {"boxes": [[0.3, 0.3, 0.7, 0.7]]}}"#,
        r#"{"problem": "thick"}"#,
    ] {
        let out = run_with(dir.path(), "run-thin", config);
        assert_eq!(out.status.code(), Some(2), "{config}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: config error"));
    }
    assert!(!dir.path().join("out").exists());
}

#[test]
fn numerical_failures_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_with(dir.path(), "run-thin", r#"{"problem": "thin", "mesh": {"n": 8}, "f_expr": "1/(x-0.5)"}"#);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("numerical invariant failed (finite field values)"), "{err}");
}

#[test]
fn io_errors_exit_with_4() {
    let out = capsim(&["run-thin", "--config", "/nonexistent/config.json"]);
    assert_eq!(out.status.code(), Some(4));
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"problem": "thin", "mesh": {"n": 4, "boxes": [[0.25, 0.25, 0.75, 0.75]]}, "time": {"t_final": 0.01}}"#).unwrap();
    let out = capsim(&["run-thin", "--config", cfg.to_str().unwrap(), "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(
        &cfg,
        r#"{"problem": "delta_study", "mesh": {"n": 8}, "time": {"t_final": 0.03}, "f_expr": "1 + x*y", "u0_expr": "x^2"}"#,
    )
    .unwrap();
    let mut outputs = Vec::new();
    for threads in ["1", "3", "3"] {
        let out = dir.path().join(format!("out{}", outputs.len()));
        let status = capsim(&["delta-study", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", threads]);
        assert!(status.status.success());
        outputs.push(std::fs::read(out.join("delta_study.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[1], outputs[2]);
}

#[test]
fn verify_quick_passes_and_fault_injection_fails() {
    let out = capsim(&["verify", "--level", "quick"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}");
    assert!(text.contains("seed 0xc0ffee"));
    let out = capsim(&["verify", "--flip-stiffness-sign"]);
    assert_eq!(out.status.code(), Some(3));
    let text = String::from_utf8_lossy(&out.stdout);
    for name in ["thin: flux compatibility", "thick: dissipativity"] {
        assert!(text.lines().any(|l| l.starts_with("FAIL") && l.contains(name)), "{name}\n{text}");
    }
}
