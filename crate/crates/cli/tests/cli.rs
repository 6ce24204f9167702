use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
seed = 3

[synthetic]
n_classes = 3
videos_per_class = 4
frames_per_video = [20, 30]
expression_classes = 2

[frame]
epochs = 3

[lstm]
hidden_dim = 6
epochs = 5
batch_size = 4
"#;

fn handsign(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_handsign"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = handsign(args);
    assert!(
        out.status.success(),
        "handsign {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tiny_config(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("tiny.toml");
    fs::write(&p, TINY).unwrap();
    p
}

#[test]
fn generate_split_canonicalize() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let data = dir.path().join("data");
    ok(&["--config", s(&cfg), "generate", "--out", s(&data)]);
    for f in ["landmarks.jsonl", "expressions.jsonl", "manifest.json"] {
        assert!(data.join(f).exists(), "{f}");
    }

    let split = dir.path().join("split.json");
    let out = ok(&["--seed", "1", "split", "--manifest", s(&data.join("manifest.json")), "--out", s(&split)]);
    assert!(out.contains("9 train / 3 test"), "{out}");
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&split).unwrap()).unwrap();
    assert_eq!(v["train"]["videos"].as_array().unwrap().len(), 9);

    let canon = dir.path().join("canonical.jsonl");
    ok(&["canonicalize", "--in", s(&data.join("landmarks.jsonl")), "--out", s(&canon)]);
    let first: serde_json::Value =
        serde_json::from_str(fs::read_to_string(&canon).unwrap().lines().next().unwrap()).unwrap();
    assert_eq!(first["canonical"], true);
    let d5: Vec<f64> = serde_json::from_value(first["frames"][0][5].clone()).unwrap();
    for (got, want) in d5.iter().zip([0.0, 0.0, 1.0]) {
        assert!((got - want).abs() <= 1e-9);
    }
}

#[test]
fn csv_generation_and_canonicalization() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let data = dir.path().join("data");
    ok(&["--config", s(&cfg), "generate", "--out", s(&data), "--format", "csv"]);
    assert!(data.join("landmarks.csv").exists());
    assert!(!data.join("landmarks.jsonl").exists());
    ok(&["canonicalize", "--in", s(&data.join("landmarks.csv")), "--out", s(&dir.path().join("c.jsonl"))]);
}

#[test]
fn staged_training_matches_single_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let staged = dir.path().join("staged");
    let out = ok(&["--config", s(&cfg), "train-frames", "--out", s(&staged), "--mode", "skeleton_only"]);
    assert!(out.contains("stage 1 (skeleton_only)"), "{out}");
    for f in ["canonical.jsonl", "features.jsonl", "frame_model.json", "stage1.json", "sequences.jsonl"] {
        assert!(staged.join(f).exists(), "{f}");
    }
    ok(&["train-lstm", "--dir", s(&staged)]);

    let single = dir.path().join("single");
    let text = ok(&["--config", s(&cfg), "run", "--out", s(&single), "--mode", "skeleton_only"]);
    assert!(text.contains("test accuracy"));
    assert_eq!(
        fs::read(staged.join("report.json")).unwrap(),
        fs::read(single.join("report.json")).unwrap()
    );

    let eval = ok(&[
        "eval",
        "--model",
        s(&single.join("lstm_model.json")),
        "--sequences",
        s(&single.join("sequences.jsonl")),
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(single.join("report.json")).unwrap()).unwrap();
    let acc = report["test"]["accuracy"].as_f64().unwrap();
    assert!(eval.contains(&format!("accuracy {acc:.4}")), "{eval}");
}

#[test]
fn ablate_writes_four_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("abl");
    let text = ok(&["--config", s(&cfg), "ablate", "--out", s(&out)]);
    for m in ["baseline", "skeleton_only", "expression_only", "fused"] {
        assert!(text.contains(m), "{text}");
        assert!(out.join(m).join("report.json").exists());
    }
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("ablation.json")).unwrap()).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 4);
    assert!(out.join("config.toml").exists());
}

#[test]
fn seed_flag_changes_the_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    ok(&["--config", s(&cfg), "--seed", "5", "generate", "--out", s(&a)]);
    ok(&["--config", s(&cfg), "--seed", "5", "generate", "--out", s(&b)]);
    ok(&["--config", s(&cfg), "--seed", "6", "generate", "--out", s(&c)]);
    let read = |d: &Path| fs::read(d.join("landmarks.jsonl")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}

#[test]
fn errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let missing = handsign(&["canonicalize", "--in", "/nonexistent.jsonl", "--out", s(&dir.path().join("x"))]);
    assert!(!missing.status.success());

    let bad_cfg = dir.path().join("bad.toml");
    fs::write(&bad_cfg, "train_fraction = 1.5\n").unwrap();
    let out = handsign(&["--config", s(&bad_cfg), "run", "--out", s(&dir.path().join("r"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("train_fraction"));

    // A frame whose index hinge sits on the wrist.
    let pts: Vec<[f64; 3]> = (0..21).map(|j| if j == 5 { [0.0, 1.0, 0.5] } else { [j as f64, 1.0, 0.5] }).collect();
    let rec = serde_json::json!({"video_id": "v", "label": "a", "frames": [pts]});
    let lm = dir.path().join("degenerate.jsonl");
    fs::write(&lm, format!("{rec}\n")).unwrap();
    let out_path = dir.path().join("degenerate_out.jsonl");
    let out = handsign(&["canonicalize", "--in", s(&lm), "--out", s(&out_path)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("wrist coincides"));
    assert!(!out_path.exists());

    let out = handsign(&["run", "--out", s(&dir.path().join("m")), "--mode", "sideways"]);
    assert!(!out.status.success());
}
