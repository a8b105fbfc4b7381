//! Acceptance gate, criterion 10: the end-to-end reproduce pipeline.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

fn report(criterion: usize, pass: bool, detail: &str) {
    println!(
        "criterion {criterion}: {} - {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} failed: {detail}");
}

fn run_reproduce(out: &Path) {
    let status = Command::new(env!("CARGO_BIN_EXE_distlab"))
        .args(["reproduce", "--seed", "1", "--out"])
        .arg(out)
        .status()
        .expect("binary runs");
    assert!(status.success(), "reproduce exited with {status}");
}

/// All regular files under `dir`, keyed by relative path.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                files.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    files
}

#[test]
fn criterion_10_end_to_end_reproduce() {
    let dir = tempfile::tempdir().unwrap();
    let out1 = dir.path().join("run1");
    let out2 = dir.path().join("run2");
    run_reproduce(&out1);
    run_reproduce(&out2);

    // Table-1-shaped output: full specification's Hubei row.
    let text = std::fs::read_to_string(out1.join("regressions.csv")).unwrap();
    let mut hubei: Option<(f64, f64)> = None;
    for line in text.lines() {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.first() == Some(&"f4") && cols.get(1) == Some(&"hubei") {
            hubei = Some((cols[2].parse().unwrap(), cols[3].parse().unwrap()));
        }
    }
    let (beta, se) = hubei.expect("f4 hubei row present");
    let recovered = beta > 0.0 && (beta - 0.0852).abs() <= 2.0 * se;

    let snap1 = snapshot(&out1);
    let snap2 = snapshot(&out2);
    let byte_identical = snap1 == snap2 && snap1.contains_key("manifest.json");

    report(
        10,
        recovered && byte_identical,
        &format!(
            "hubei {beta:.4} (se {se:.4}) vs 0.0852; {} files byte-identical across reruns",
            snap1.len()
        ),
    );
}
