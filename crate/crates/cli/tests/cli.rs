//! End-to-end checks of the command-line surface: argument parsing,
//! output formats, and exit codes.

use std::path::Path;
use std::process::Command;

fn ganpipe() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ganpipe"))
}

#[test]
fn costmodel_prints_the_three_equations() {
    let out = ganpipe()
        .args(["costmodel", "--m", "3", "--n", "8", "--k", "3", "--df", "4", "--pad", "1"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("3456"), "{text}");
    assert!(text.contains("816"), "{text}");
    assert!(text.contains("0.236111"), "{text}");
}

#[test]
fn costmodel_rejects_bad_geometry_with_exit_1() {
    let out = ganpipe()
        .args(["costmodel", "--m", "1", "--n", "1", "--k", "9", "--df", "4"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn synth_data_writes_seeded_pngs() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("set");
    let run = |path: &Path| {
        let out = ganpipe()
            .args([
                "synth-data",
                "--count",
                "3",
                "--resolution",
                "16",
                "--kind",
                "gradient-stripe",
                "--seed",
                "9",
                "--out",
            ])
            .arg(path)
            .output()
            .unwrap();
        assert!(out.status.success());
    };
    run(&out_path);
    let files: Vec<_> = std::fs::read_dir(&out_path).unwrap().collect();
    assert_eq!(files.len(), 3);

    let again = dir.path().join("set2");
    run(&again);
    assert_eq!(
        std::fs::read(out_path.join("0.png")).unwrap(),
        std::fs::read(again.join("0.png")).unwrap()
    );
}

#[test]
fn resample_bench_emits_the_pinned_csv_header() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("imgs");
    ganpipe()
        .args(["synth-data", "--count", "2", "--resolution", "32", "--out"])
        .arg(&data)
        .output()
        .unwrap();
    let csv = dir.path().join("table.csv");
    let out = ganpipe()
        .args([
            "resample-bench",
            "--input-dir",
        ])
        .arg(&data)
        .args(["--target", "8x8", "--kernels", "nearest,box", "--repeats", "3", "--out"])
        .arg(&csv)
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("kernel,seconds_per_image"));
    assert_eq!(lines.count(), 2);
}

#[test]
fn evaluate_writes_requested_metric_rows() {
    let dir = tempfile::tempdir().unwrap();
    let real = dir.path().join("real");
    let fake = dir.path().join("fake");
    for (path, seed) in [(&real, "1"), (&fake, "2")] {
        ganpipe()
            .args(["synth-data", "--count", "6", "--resolution", "16", "--seed", seed, "--out"])
            .arg(path)
            .output()
            .unwrap();
    }
    let csv = dir.path().join("report.csv");
    let out = ganpipe()
        .args(["evaluate", "--real-dir"])
        .arg(&real)
        .arg("--fake-dir")
        .arg(&fake)
        .args(["--metrics", "swd,msssim", "--seed", "4", "--out"])
        .arg(&csv)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("metric,value,std,params"));
    assert!(text.contains("Sliced Wasserstein Distance,"));
    assert!(text.contains("MSSSIM,"));
    assert!(!text.contains("Inception Score"));
}

#[test]
fn missing_config_file_is_a_config_error() {
    let out = ganpipe()
        .args(["pipeline", "--config", "/nonexistent/config.txt"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unreadable_input_dir_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("t.csv");
    let out = ganpipe()
        .args(["resample-bench", "--input-dir"])
        .arg(dir.path())
        .args(["--target", "8x8", "--repeats", "3", "--out"])
        .arg(&csv)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
