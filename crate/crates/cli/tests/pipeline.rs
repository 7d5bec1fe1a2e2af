//! CLI behavior: artifact ordering, exit codes, config file handling.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_asr-audit")
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/corpus40").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(binary()).args(args).output().expect("spawn asr-audit")
}

#[test]
fn sdi_before_fit_names_the_producer() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let output = run(&["--out", out.to_str().unwrap(), "sdi"]);
    assert_eq!(output.status.code(), Some(1), "input error exit code");
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("run `asr-audit features` first")
            || stderr.contains("run `asr-audit fit` first"),
        "stderr: {stderr}"
    );
}

#[test]
fn numerical_failure_uses_exit_code_two() {
    // All durations identical: the log-duration column is constant and
    // standardization must fail numerically.
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("manifest.jsonl");
    let mut lines = String::new();
    for i in 0..4 {
        lines.push_str(&format!(
            "{{\"sample_id\":\"u{i}\",\"speaker_id\":\"s{i}\",\"dataset_id\":\"d1\",\
             \"reference\":\"a b\",\"hypotheses\":{{\"m1\":\"a b\"}},\"duration_s\":2.0,\
             \"snr_db\":{}.0,\"age_raw\":\"{}\"}}\n",
            10 + i,
            20 + i
        ));
    }
    std::fs::write(&manifest, lines).unwrap();
    let out = dir.path().join("run");
    let output = run(&[
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "features",
    ]);
    assert_eq!(output.status.code(), Some(2), "numerical failure exit code");
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("constant column"), "stderr: {stderr}");
}

#[test]
fn config_file_supplies_paths_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let conf = dir.path().join("audit.conf");
    std::fs::write(
        &conf,
        format!(
            "# audit configuration\nmanifest = {}\nembeddings = {}\nout = {}\nseed = 3\n",
            fixture("manifest.jsonl").display(),
            fixture("embeddings.txt").display(),
            out.display()
        ),
    )
    .unwrap();
    let output = run(&["--config", conf.to_str().unwrap(), "score"]);
    assert_eq!(output.status.code(), Some(0), "{}", String::from_utf8_lossy(&output.stderr));
    assert!(out.join("scores.csv").exists());

    // A flag overrides the config file's output directory.
    let out2 = dir.path().join("override");
    let output = run(&[
        "--config",
        conf.to_str().unwrap(),
        "--out",
        out2.to_str().unwrap(),
        "score",
    ]);
    assert_eq!(output.status.code(), Some(0));
    assert!(out2.join("scores.csv").exists());
}

#[test]
fn csv_manifest_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("manifest.csv");
    std::fs::write(
        &manifest,
        "sample_id,speaker_id,dataset_id,reference,hyp__m1,hyp__m2,duration_s,sex\n\
         u1,s1,d1,hello there friend,hello there friend,hello their friend,2.0,female\n\
         u2,s2,d1,good morning all,good morning all,morning all,1.5,male\n",
    )
    .unwrap();
    let embeddings = dir.path().join("embeddings.txt");
    std::fs::write(&embeddings, "hello 1.0 0.0\nthere 0.0 1.0\nfriend 0.5 0.5\n").unwrap();
    let out = dir.path().join("run");
    let output = run(&[
        "--manifest",
        manifest.to_str().unwrap(),
        "--embeddings",
        embeddings.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "score",
    ]);
    assert_eq!(output.status.code(), Some(0), "{}", String::from_utf8_lossy(&output.stderr));
    let scores = std::fs::read_to_string(out.join("scores.csv")).unwrap();
    assert_eq!(scores.lines().count(), 1 + 4, "header + 2 samples x 2 models");
}

#[test]
fn score_rows_follow_manifest_then_model_order() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let output = run(&[
        "--manifest",
        fixture("manifest.jsonl").to_str().unwrap(),
        "--embeddings",
        fixture("embeddings.txt").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "score",
    ]);
    assert_eq!(output.status.code(), Some(0));
    let scores = std::fs::read_to_string(out.join("scores.csv")).unwrap();
    let mut lines = scores.lines().skip(1);
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    let second: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first[0], "utt00000");
    assert_eq!(first[1], "sys1");
    assert_eq!(second[0], "utt00000");
    assert_eq!(second[1], "sys2");
}

#[test]
fn gen_synthetic_emits_all_four_files() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let output = run(&[
        "gen-synthetic",
        "--corpus-out",
        corpus.to_str().unwrap(),
        "--utterances",
        "12",
        "--models",
        "2",
        "--speakers",
        "4",
    ]);
    assert_eq!(output.status.code(), Some(0), "{}", String::from_utf8_lossy(&output.stderr));
    for name in ["manifest.jsonl", "embeddings.txt", "planted_scores.csv", "truth.json"] {
        assert!(corpus.join(name).exists(), "{name} missing");
    }
    let manifest = std::fs::read_to_string(corpus.join("manifest.jsonl")).unwrap();
    assert_eq!(manifest.lines().count(), 12);
}

#[test]
fn planted_scores_feed_the_fit_stage_directly() {
    // The planted score table can replace the text-derived one; this is how
    // regression recovery is exercised end to end.
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let status = Command::new(binary())
        .args([
            "gen-synthetic",
            "--corpus-out",
            corpus.to_str().unwrap(),
            "--utterances",
            "80",
            "--models",
            "3",
            "--speakers",
            "20",
        ])
        .status()
        .unwrap();
    assert!(status.success());

    let out = dir.path().join("run");
    std::fs::create_dir_all(&out).unwrap();
    let features = run(&[
        "--manifest",
        corpus.join("manifest.jsonl").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "features",
    ]);
    assert_eq!(features.status.code(), Some(0));
    std::fs::copy(corpus.join("planted_scores.csv"), out.join("scores.csv")).unwrap();
    let fit = run(&["--out", out.to_str().unwrap(), "fit"]);
    assert_eq!(fit.status.code(), Some(0), "{}", String::from_utf8_lossy(&fit.stderr));
    assert!(out.join("fits/fit_wer.json").exists());
    assert!(out.join("fits.csv").exists());
}

#[test]
fn help_exits_zero() {
    let output = run(&["--help"]);
    assert_eq!(output.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&output.stdout);
    for sub in ["score", "features", "fit", "sdi", "cartography", "pca", "report", "gen-synthetic", "gen-wada-table"] {
        assert!(stdout.contains(sub), "help lacks {sub}");
    }
}

#[test]
fn unknown_flag_exits_one() {
    let output = run(&["--definitely-not-a-flag", "score"]);
    assert_eq!(output.status.code(), Some(1));
}
