use std::path::Path;
use std::process::{Command, Output};

fn footpedal(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_footpedal")).args(args).current_dir(dir).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = footpedal(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn value(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
        .parse()
        .unwrap()
}

#[test]
fn fk_rest_frame_is_home() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["fk", "--forces", "5.6,5.6,5.6,5.6,5.6,5.6,0.5,0.5"]);
    for key in ["x", "y", "yaw", "pitch", "Fx", "Fy", "Fz", "M"] {
        assert_eq!(value(&out, key), 0.0, "{key}");
    }
    assert!(out.contains("isometric=\n"));
}

#[test]
fn fk_reports_isometric_cells() {
    let dir = tempfile::tempdir().unwrap();
    // Front cell past saturation while the rear one relaxes.
    let out = ok(dir.path(), &["fk", "--forces", "15,3.6,5.6,5.6,5.6,5.6,0.5,0.5"]);
    assert!(out.contains("isometric=1\n"), "{out}");
    assert!(value(&out, "Fy") < 0.0);
}

#[test]
fn encode_then_parse_reproduces_frames() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("t,F1,F2,F3,F4,F5,F6,F7,F8\n");
    for k in 0..300 {
        let f: Vec<String> = (0..8).map(|c| format!("{}", 0.002 * ((k * 7 + c * 13) % 4000) as f64)).collect();
        csv.push_str(&format!("{},{}\n", k as f64 * 0.02, f.join(",")));
    }
    std::fs::write(dir.path().join("in.csv"), &csv).unwrap();
    ok(dir.path(), &["encode-frames", "--input", "in.csv", "--out", "stream.bin"]);
    assert_eq!(std::fs::metadata(dir.path().join("stream.bin")).unwrap().len(), 300 * 20);
    ok(dir.path(), &["parse-frames", "--input", "stream.bin", "--out", "out.csv", "--diagnostics", "diag.txt"]);
    let diag = std::fs::read_to_string(dir.path().join("diag.txt")).unwrap();
    assert_eq!(value(&diag, "frames"), 300.0);
    assert_eq!(value(&diag, "checksum_failures"), 0.0);
    assert_eq!(value(&diag, "dropped_frames"), 0.0);

    let parse = |text: &str| -> Vec<Vec<f64>> {
        text.lines().skip(1).map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect()
    };
    let a = parse(&csv);
    let b = parse(&std::fs::read_to_string(dir.path().join("out.csv")).unwrap());
    assert_eq!(a.len(), b.len());
    for (ra, rb) in a.iter().zip(&b) {
        for (x, y) in ra.iter().zip(rb) {
            assert!((x - y).abs() < 1e-9, "{ra:?} vs {rb:?}");
        }
    }
}

#[test]
fn simulate_calibrate_predict() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), "[dataset]\nsubjects = 1\ntrials_per_direction = 2\n").unwrap();
    let said = ok(dir.path(), &["simulate", "--config", "c.toml", "--out", "data"]);
    assert!(said.starts_with("wrote 40 trials"), "{said}");
    ok(dir.path(), &["calibrate", "--config", "c.toml", "--dataset", "data", "--method", "statics", "--out", "m.toml"]);
    let out = ok(dir.path(), &["predict", "--model", "m.toml", "--subject", "1", "--input", "data/s01_F_r1.csv"]);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("t,Fx,Fy,Fz,M,label"));
    let labels: Vec<&str> = lines.map(|l| l.rsplit(',').next().unwrap()).collect();
    assert_eq!(labels.len(), 150);
    assert!(labels.iter().filter(|&&l| l == "F").count() > 100);
    assert!(labels.iter().all(|&l| l == "F" || l == "Neutral"), "{labels:?}");
}

#[test]
fn workspace_single_slice() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["workspace", "--yaw-deg", "0", "--samples", "2000", "--out", "w.csv"]);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("yaw_deg,samples,accepted,fraction,area_m2,x_min,x_max,y_min,y_max"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "0");
    assert_eq!(row[1], "2000");
    assert_eq!(std::fs::read_to_string(dir.path().join("w.csv")).unwrap(), out);
}

#[test]
fn errors_exit_nonzero_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 4] = [
        &["calibrate", "--dataset", "nowhere", "--method", "statics", "--out", "m.toml"],
        &["evaluate", "--model", "missing.toml", "--dataset", "nowhere", "--out", "r.csv"],
        &["calibrate", "--dataset", "nowhere", "--method", "pca", "--out", "m.toml"],
        &["fk", "--forces", "nan,1,1,1,1,1,1,1"],
    ];
    for args in cases {
        let out = footpedal(dir.path(), args);
        assert!(!out.status.success(), "{args:?}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.starts_with("error: "), "{args:?}: {err}");
    }
    let out = footpedal(dir.path(), &["fk", "--forces", "1,2,3"]);
    assert!(!out.status.success());
}

#[test]
fn compare_needs_two_reports() {
    let dir = tempfile::tempdir().unwrap();
    assert!(!footpedal(dir.path(), &["compare", "only.csv", "--out", "c.csv"]).status.success());
}
