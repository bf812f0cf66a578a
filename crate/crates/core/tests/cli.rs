use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn modeseek(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_modeseek"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_string()
}

fn write(dir: &TempDir, name: &str, contents: &str) -> String {
    let p = path(dir, name);
    fs::write(&p, contents).unwrap();
    p
}

fn lines(p: impl AsRef<Path>) -> Vec<String> {
    fs::read_to_string(p)
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect()
}

const FOUR_POINTS: &str = "0,0\n0.1,0\n5,5\n5.1,5\n";

#[test]
fn cluster_two_pairs() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "pts.csv", FOUR_POINTS);
    let labels = path(&dir, "labels.csv");
    let modes = path(&dir, "modes.csv");
    let out = modeseek(&[
        "cluster",
        "--input",
        &input,
        "--bandwidth",
        "1",
        "--output",
        &labels,
        "--modes",
        &modes,
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let l = lines(&labels);
    assert_eq!(l.len(), 4);
    assert_eq!(l[0], l[1]);
    assert_eq!(l[2], l[3]);
    assert_ne!(l[0], l[2]);
    assert_eq!(lines(&modes).len(), 2);
}

#[test]
fn cluster_blurring_methods_agree() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "pts.csv", FOUR_POINTS);
    for method in ["bms", "bms-accel"] {
        let labels = path(&dir, &format!("{method}.csv"));
        let out = modeseek(&[
            "cluster",
            "--input",
            &input,
            "--bandwidth",
            "1",
            "--method",
            method,
            "--output",
            &labels,
        ]);
        assert!(out.status.success(), "{method}");
        let l = lines(&labels);
        assert_eq!(l[0], l[1]);
        assert_ne!(l[1], l[2]);
    }
}

#[test]
fn segment_uniform_image() {
    let dir = TempDir::new().unwrap();
    let image = write(
        &dir,
        "flat.pgm",
        "P2\n4 3\n255\n7 7 7 7\n7 7 7 7\n7 7 7 7\n",
    );
    let output = path(&dir, "seg.pgm");
    let report = path(&dir, "report.json");
    let out = modeseek(&[
        "segment",
        "--image",
        &image,
        "--bandwidth",
        "2",
        "--output",
        &output,
        "--report",
        &report,
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = fs::read_to_string(&output).unwrap();
    let tokens: Vec<&str> = text.split_whitespace().collect();
    assert_eq!(&tokens[..4], &["P2", "4", "3", "1"]);
    assert!(tokens[4..].iter().all(|t| *t == "0"));
    assert_eq!(tokens.len(), 4 + 12);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["clusters"], 1);
    assert_eq!(json["pixels"], 12);
}

#[test]
fn denoise_without_iterations_is_identity() {
    let dir = TempDir::new().unwrap();
    let contents = "0.125,1.5\n-3.25,2\n4,0.1\n1,1\n";
    let input = write(&dir, "pts.csv", contents);
    let output = path(&dir, "out.csv");
    let out = modeseek(&[
        "denoise",
        "--input",
        &input,
        "--bandwidth",
        "1",
        "--knn",
        "2",
        "--tangent-dim",
        "1",
        "--max-iter",
        "0",
        "--output",
        &output,
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(fs::read_to_string(&output).unwrap(), contents);
}

#[test]
fn kmodes_writes_labels_and_centers() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "pts.csv", FOUR_POINTS);
    let labels = path(&dir, "labels.csv");
    let centers = path(&dir, "centers.csv");
    let soft = path(&dir, "soft.csv");
    let out = modeseek(&[
        "kmodes",
        "--input",
        &input,
        "--k",
        "2",
        "--bandwidth",
        "1",
        "--lambda",
        "0.01",
        "--graph-knn",
        "1",
        "--output",
        &labels,
        "--centers",
        &centers,
        "--soft",
        &soft,
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let l = lines(&labels);
    assert_eq!(l[0], l[1]);
    assert_ne!(l[0], l[2]);
    assert_eq!(lines(&centers).len(), 2);
    assert_eq!(lines(&soft).len(), 4);
}

#[test]
fn modetree_levels() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "pts.csv", "0\n2\n");
    let output = path(&dir, "tree.csv");
    let out = modeseek(&[
        "modetree",
        "--input",
        &input,
        "--sigma-grid",
        "0.5:1.5:2",
        "--output",
        &output,
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    // Two modes at the first level, one after the pair merges.
    let levels: Vec<String> = lines(&output)
        .iter()
        .map(|l| l.split(',').next().unwrap().to_string())
        .collect();
    assert_eq!(levels, ["0", "0", "1"]);
}

#[test]
fn input_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let ragged = write(&dir, "bad.csv", "1,2\n3\n");
    let out = modeseek(&[
        "cluster",
        "--input",
        &ragged,
        "--bandwidth",
        "1",
        "--output",
        &path(&dir, "l.csv"),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());

    let missing = path(&dir, "missing.csv");
    let out = modeseek(&[
        "cluster",
        "--input",
        &missing,
        "--bandwidth",
        "1",
        "--output",
        &path(&dir, "l.csv"),
    ]);
    assert_eq!(out.status.code(), Some(1));

    let out = modeseek(&["cluster", "--bandwidth", "1"]);
    assert_eq!(out.status.code(), Some(1));

    let input = write(&dir, "pts.csv", FOUR_POINTS);
    let out = modeseek(&[
        "cluster",
        "--input",
        &input,
        "--bandwidth",
        "-1",
        "--output",
        &path(&dir, "l.csv"),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn numerical_failures_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let pairs = write(&dir, "pairs.csv", "0,1\n0.1,1.2\n0.2,0.9\n");
    let query = write(&dir, "query.csv", "1000\n");
    let out = modeseek(&[
        "condmodes",
        "--input",
        &pairs,
        "--xdim",
        "1",
        "--bandwidth",
        "0.1",
        "--query",
        &query,
        "--output",
        &path(&dir, "modes.csv"),
    ]);
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn help_exits_with_zero() {
    assert_eq!(modeseek(&["--help"]).status.code(), Some(0));
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let mut rows = String::new();
    for i in 0..60 {
        let t = i as f64 * 0.37;
        rows.push_str(&format!(
            "{},{}\n",
            t.sin() * 3.0 + (i % 3) as f64 * 4.0,
            t.cos()
        ));
    }
    let input = write(&dir, "pts.csv", &rows);
    let run = |tag: &str, threads: &str| {
        let labels = path(&dir, &format!("labels-{tag}.csv"));
        let modes = path(&dir, &format!("modes-{tag}.csv"));
        let out = Command::new(env!("CARGO_BIN_EXE_modeseek"))
            .env("MODESEEK_THREADS", threads)
            .args([
                "cluster",
                "--input",
                &input,
                "--bandwidth",
                "0.8",
                "--output",
                &labels,
                "--modes",
                &modes,
            ])
            .output()
            .unwrap();
        assert!(out.status.success());
        (fs::read(labels).unwrap(), fs::read(modes).unwrap())
    };
    let a = run("a", "1");
    let b = run("b", "4");
    assert_eq!(a, b);
}
