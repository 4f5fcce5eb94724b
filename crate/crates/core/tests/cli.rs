mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use transinit::model::{encode_crf, load_crf, load_indexer, read_file};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_transinit")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const QUICK: [&str; 4] = ["--max-epochs", "10", "--patience", "3"];

fn train(out: &Path) -> Output {
    let src = data("toy_news.conll");
    let mut args = vec!["train", "--source", path(&src), "--out-dir", path(out)];
    args.extend(QUICK);
    run(&args)
}

#[test]
fn train_writes_a_model_that_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let out = train(&a);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(train(&b).status.success());

    let bytes = read_file(&a.join("model.bin")).unwrap();
    assert_eq!(bytes, read_file(&b.join("model.bin")).unwrap());
    let (model, indexer_ref) = load_crf(&a.join("model.bin")).unwrap();
    assert_eq!(encode_crf(&model, &indexer_ref), bytes);
    let indexer = load_indexer(&a.join("indexer.txt"), &indexer_ref).unwrap();
    assert_eq!(indexer.len(), model.feature_dimension());
    assert!(load_indexer(&b.join("train_log.json"), &indexer_ref).is_err());
    assert!(a.join("manifest.json").exists());
}

#[test]
fn replay_reproduces_a_transfer_run() {
    let dir = tempfile::tempdir().unwrap();
    let source_dir = dir.path().join("source");
    assert!(train(&source_dir).status.success());
    let src = source_dir.join("model.bin");
    let (tgt, test) = (data("toy_campus.conll"), data("toy_campus_test.conll"));
    let out_dir = dir.path().join("run");
    let mut args = vec![
        "transfer", "--source", path(&src), "--target", path(&tgt), "--test", path(&test),
        "--method", "transinit", "--out-dir", path(&out_dir),
    ];
    args.extend(QUICK);
    let out = run(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["model.bin", "indexer.txt", "correlation_before.bin", "correlation_after.bin",
              "correlation_report.txt", "report.txt", "report.kv", "manifest.json"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let report = std::fs::read_to_string(out_dir.join("correlation_report.txt")).unwrap();
    assert!(report.contains("STUDENT"));

    let replay_dir = dir.path().join("again");
    let manifest = out_dir.join("manifest.json");
    let out = run(&["replay", "--manifest", path(&manifest), "--out-dir", path(&replay_dir)]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}{}", String::from_utf8_lossy(&out.stderr));
    assert!(!stdout.contains("MISMATCH") && !stdout.contains("MISSING"), "{stdout}");
    assert_eq!(read_file(&out_dir.join("model.bin")).unwrap(), read_file(&replay_dir.join("model.bin")).unwrap());
}

#[test]
fn replay_refuses_changed_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("news.conll");
    std::fs::copy(data("toy_news.conll"), &src).unwrap();
    let out_dir = dir.path().join("run");
    let mut args = vec!["train", "--source", path(&src), "--out-dir", path(&out_dir)];
    args.extend(QUICK);
    assert!(run(&args).status.success());
    std::fs::write(&src, "Bob B-PER\n").unwrap();
    let out = run(&["replay", "--manifest", path(&out_dir.join("manifest.json"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["train", "--source", "/nonexistent/x.conll", "--out-dir", path(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/x.conll"));
}

#[test]
fn unknown_method_is_a_usage_error() {
    let tgt = data("toy_campus.conll");
    let out = run(&["transfer", "--target", path(&tgt), "--method", "magic", "--out-dir", "/tmp/x"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn cold_start_warns_about_an_unused_source() {
    let dir = tempfile::tempdir().unwrap();
    let (src, tgt) = (data("toy_news.conll"), data("toy_campus.conll"));
    let mut args = vec![
        "transfer", "--source", path(&src), "--target", path(&tgt), "--method", "cold", "--out-dir", path(dir.path()),
    ];
    args.extend(QUICK);
    let out = run(&args);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--source is ignored"));
}

#[test]
fn transfer_reuses_a_trained_source_model() {
    let dir = tempfile::tempdir().unwrap();
    let source_dir = dir.path().join("source");
    assert!(train(&source_dir).status.success());
    let (tgt, emb) = (data("toy_campus.conll"), data("toy_embeddings.txt"));
    let model = source_dir.join("model.bin");
    let out_dir = dir.path().join("embed");
    let mut args = vec![
        "transfer", "--source", path(&model), "--target", path(&tgt), "--method", "labelembed",
        "--embeddings", path(&emb), "--out-dir", path(&out_dir),
    ];
    args.extend(QUICK);
    let out = run(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let alignment = std::fs::read_to_string(out_dir.join("alignment.txt")).unwrap();
    assert!(alignment.contains("STUDENT") && alignment.contains("PER"), "{alignment}");
}

#[test]
fn curve_and_synth_commands_write_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    let synth_dir = dir.path().join("synth");
    let out = run(&["synth", "--seed", "4", "--out-dir", path(&synth_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["source.conll", "target_train.conll", "target_test.conll", "spec.json"] {
        assert!(synth_dir.join(f).exists(), "{f}");
    }

    let (src, tgt, test) = (data("toy_news.conll"), data("toy_campus.conll"), data("toy_campus_test.conll"));
    let curve_dir = dir.path().join("curve");
    let mut args = vec![
        "curve", "--source", path(&src), "--target", path(&tgt), "--test", path(&test),
        "--methods", "cold,transinit", "--seeds", "0,1", "--partitions", "3", "--out-dir", path(&curve_dir),
    ];
    args.extend(QUICK);
    let out = run(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(curve_dir.join("curve.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 3 * 2);
    assert!(csv.starts_with(transinit::eval::CURVE_HEADER));
    assert!(curve_dir.join("plan_seed0.txt").exists());
}

#[test]
fn unactivated_deepcrf_reports_like_twolayer() {
    let dir = tempfile::tempdir().unwrap();
    let source_dir = dir.path().join("source");
    assert!(train(&source_dir).status.success());
    let model = source_dir.join("model.bin");
    let (tgt, test) = (data("toy_campus.conll"), data("toy_campus_test.conll"));
    let report = |method: &str, activation: &str| {
        let out_dir = dir.path().join(format!("{method}-{activation}"));
        let mut args = vec![
            "transfer", "--source", path(&model), "--target", path(&tgt), "--test", path(&test),
            "--method", method, "--activation", activation, "--out-dir", path(&out_dir),
        ];
        args.extend(QUICK);
        let out = run(&args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read_to_string(out_dir.join("report.kv")).unwrap()
    };
    assert_eq!(report("deepcrf", "none"), report("twolayer", "hard_tanh"));
}
