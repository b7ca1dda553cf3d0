use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn selmask(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_selmask"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn code(args: &[&str]) -> i32 {
    selmask(args).status.code().unwrap()
}

fn data(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data/synthetic")
        .join(name)
        .display()
        .to_string()
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(code(&[]), 2);
    assert_eq!(code(&["no-such-command"]), 2);
    assert_eq!(code(&["score", "--bogus", "1"]), 2);
    let out = selmask(&["score", "--bogus", "1"]);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(!err.contains("error: error:"), "{err}");
}

#[test]
fn missing_input_creates_no_output() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sg");
    let missing = tmp.path().join("absent.ckpt").display().to_string();
    let c = code(&["eval-sg", "--checkpoint", &missing, "--dataset", &data("ls.tsv"), "--out", out.to_str().unwrap()]);
    assert_eq!(c, 2);
    assert!(!out.exists());
}

#[test]
fn bad_checkpoint_is_a_format_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sg");
    let c = code(&["eval-sg", "--checkpoint", &data("ls.tsv"), "--dataset", &data("ls.tsv"), "--out", out.to_str().unwrap()]);
    assert_eq!(c, 3);
}

#[test]
fn score_of_an_unchanged_copy() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "the cat sat on the mat .\nwe like the dog .\n";
    let src = write(tmp.path(), "src.txt", text);
    let out = tmp.path().join("score");
    let r = selmask(&["score", "--source", &src, "--system", &src, "--refs", &src, "--out", out.to_str().unwrap()]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let scores = json(out.join("scores.json"));
    let sari = scores["sari"]["total"].as_f64().unwrap();
    assert!((sari - 200.0 / 3.0).abs() < 1e-9, "{scores}");
}

#[test]
fn score_rejects_misaligned_files() {
    let tmp = tempfile::tempdir().unwrap();
    let a = write(tmp.path(), "a.txt", "one line .\ntwo lines .\n");
    let b = write(tmp.path(), "b.txt", "one line .\n");
    let out = tmp.path().join("score");
    assert_eq!(code(&["score", "--source", &a, "--system", &b, "--refs", &a, "--out", out.to_str().unwrap()]), 3);
}

#[test]
fn prepare_removes_test_overlap() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = write(
        tmp.path(),
        "corpus.txt",
        "The dog ran to the big red house today .\nA cat sat on the warm mat by the door .\nThe dog ran to the big red house today .\nbirds sing in the tall green trees all morning .\n",
    );
    let test = write(tmp.path(), "test.txt", "a cat sat on the warm mat by the door .\n");
    let out = tmp.path().join("prep");
    let r = selmask(&["prepare", "--corpus", &corpus, "--test-sets", &test, "--out", out.to_str().unwrap()]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let kept = fs::read_to_string(out.join("corpus.txt")).unwrap();
    // Only test overlap is removed; repeats inside the corpus stay.
    assert_eq!(kept.lines().count(), 3, "{kept}");
    assert!(!kept.to_lowercase().contains("cat sat"));
    let stats = json(out.join("stats.json"));
    assert_eq!(stats["dedup_removed"], 1);
}

#[test]
fn config_file_sits_between_defaults_and_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "the cat sat on the mat .\n";
    let src = write(tmp.path(), "src.txt", text);
    let cfg = write(
        tmp.path(),
        "run.conf",
        &format!("# score settings\nsource = {src}\nsystem={src}\nrefs = {src}\nseed = 7\n"),
    );
    let first = tmp.path().join("first");
    assert_eq!(code(&["score", "--config", &cfg, "--out", first.to_str().unwrap()]), 0);
    assert_eq!(json(first.join("manifest.json"))["seed"], 7);

    let second = tmp.path().join("second");
    assert_eq!(code(&["score", "--config", &cfg, "--seed", "9", "--out", second.to_str().unwrap()]), 0);
    assert_eq!(json(second.join("manifest.json"))["seed"], 9);

    let bad = write(tmp.path(), "bad.conf", "no-such-key = 1\n");
    assert_eq!(code(&["score", "--config", &bad, "--out", tmp.path().join("x").to_str().unwrap()]), 2);
    let malformed = write(tmp.path(), "malformed.conf", "just words\n");
    assert_eq!(code(&["score", "--config", &malformed, "--out", tmp.path().join("y").to_str().unwrap()]), 3);
}

#[test]
fn manifest_from_another_command_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let src = write(tmp.path(), "src.txt", "the cat sat on the mat .\n");
    let out = tmp.path().join("score");
    assert_eq!(code(&["score", "--source", &src, "--system", &src, "--refs", &src, "--out", out.to_str().unwrap()]), 0);
    let manifest = out.join("manifest.json").display().to_string();
    assert_eq!(code(&["prepare", "--config", &manifest, "--out", tmp.path().join("p").to_str().unwrap()]), 2);
}

#[test]
fn pretrain_reruns_identically_from_its_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let args = [
        "pretrain", "--corpus", &data("ordinary.txt"), "--lexicon", &data("lexicon.tsv"),
        "--epochs", "1", "--layers", "1", "--heads", "2", "--d-model", "16", "--d-ff", "32", "--max-seq-len", "32",
        "--out", a.to_str().unwrap(),
    ];
    let r = selmask(&args);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let b = tmp.path().join("b");
    let manifest = a.join("manifest.json").display().to_string();
    assert_eq!(code(&["pretrain", "--config", &manifest, "--out", b.to_str().unwrap()]), 0);
    for f in ["model.ckpt", "loss.csv", "masking.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(json(a.join("manifest.json"))["outputs"], json(b.join("manifest.json"))["outputs"]);
}
