use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mclab::formats::{read_matrix, read_samples, read_truth};
use mclab::report::{parse_csv, CSV_HEADER};

fn mclab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mclab"))
        .args(args)
        .output()
        .expect("running mclab")
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn golden_csv_through_the_cli() {
    let conf = data("phase_2x2.conf");
    let out = mclab(&["phase", "--config", s(&conf)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let golden = std::fs::read(data("phase_2x2.csv")).unwrap();
    assert_eq!(out.stdout, golden);

    // thread count does not change the bytes
    let out = mclab(&["phase", "--config", s(&conf), "--threads", "3"]);
    assert_eq!(out.stdout, golden);
}

#[test]
fn overrides_and_svg_output() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("out.csv");
    let out = mclab(&[
        "phase", "--set", "n=8", "--set", "r=1", "--set", "m=30,50", "--set", "trials=2",
        "--seed", "3", "--out", s(&csv),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with(CSV_HEADER));
    let rows = parse_csv(&text).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.n == 8 && r.trials == 2));

    let out = mclab(&[
        "cert", "--set", "n=8", "--set", "r=1", "--set", "p=0.7", "--set", "trials=3",
        "--format", "svg",
    ]);
    assert!(out.status.success());
    let svg = String::from_utf8(out.stdout).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
}

#[test]
fn configuration_errors_exit_one() {
    for args in [
        vec!["phase"],
        vec!["phase", "--set", "n=8", "--set", "r=1"],
        vec!["phase", "--set", "bogus=1"],
        vec!["phase", "--set", "n=8", "--set", "r=9", "--set", "m=10"],
        vec!["lower", "--set", "n=8", "--set", "r=1", "--set", "p=0.5"],
        vec!["phase", "--config", "/nonexistent/file.conf"],
        vec!["frobnicate"],
    ] {
        let out = mclab(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
    assert_eq!(mclab(&["--help"]).status.code(), Some(0));
}

#[test]
fn gen_and_solve_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let truth = dir.path().join("truth.txt");
    let samples = dir.path().join("samples.txt");
    let xhat = dir.path().join("xhat.txt");
    let out = mclab(&[
        "gen", "--n", "16", "--r", "1", "--seed", "5", "--out", s(&truth), "--samples", s(&samples),
        "--p", "0.6",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let gt = read_truth(&truth).unwrap();
    assert_eq!((gt.n(), gt.rank()), (16, 1));
    let (set, values) = read_samples(&samples).unwrap();
    assert!(values.is_none() && set.n1() == 16);

    let out = mclab(&[
        "solve", "--samples", s(&samples), "--truth", s(&truth), "--rank-hint", "1", "--out",
        s(&xhat),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let line = String::from_utf8(out.stdout).unwrap();
    assert!(line.contains("recovered=true"), "{line}");
    let x = read_matrix(&xhat).unwrap();
    assert!(x.sub(gt.matrix()).frobenius_norm() <= 1e-4 * gt.matrix().frobenius_norm());

    // without values or truth there is nothing to complete
    let out = mclab(&["solve", "--samples", s(&samples)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn solve_reports_non_convergence_with_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let truth = dir.path().join("truth.txt");
    let samples = dir.path().join("samples.txt");
    let out = mclab(&[
        "gen", "--n", "16", "--r", "2", "--seed", "1", "--out", s(&truth), "--samples", s(&samples),
        "--m", "60", "--values",
    ]);
    assert!(out.status.success());
    let (_, values) = read_samples(&samples).unwrap();
    assert!(values.is_some());
    let out = mclab(&["solve", "--samples", s(&samples), "--max-iter", "2"]);
    assert_eq!(out.status.code(), Some(2));
}
