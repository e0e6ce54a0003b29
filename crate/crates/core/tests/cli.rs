use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn fixture(name: &str) -> PathBuf {
    manifest_dir().join("tests/fixtures").join(name)
}

fn golden(name: &str) -> Vec<u8> {
    fs::read(manifest_dir().join("tests/golden").join(name)).unwrap()
}

fn ecpec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ecpec"))
        .args(args)
        .env_remove("ECPEC_OUT_DIR")
        .output()
        .unwrap()
}

fn run_ok(args: &[&str]) -> Output {
    let out = ecpec(args);
    assert!(
        out.status.success(),
        "ecpec {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn pipeline_matches_golden_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = fixture("corpus.json");
    run_ok(&[
        "pipeline",
        "--corpus",
        path_str(&corpus),
        "--seed",
        "42",
        "--dump-encoder",
        "--out",
        path_str(tmp.path()),
    ]);
    let names = listing(tmp.path());
    assert_eq!(names, listing(&manifest_dir().join("tests/golden")));
    for name in names {
        assert!(
            fs::read(tmp.path().join(&name)).unwrap() == golden(&name),
            "{name} differs from golden"
        );
    }
}

#[test]
fn each_stage_reproduces_its_golden_artifact() {
    let corpus = fixture("corpus.json");
    for (command, file) in [
        ("build-graph", "graphs.json"),
        ("align", "alignments.json"),
        ("predict", "predictions.json"),
    ] {
        let tmp = tempfile::tempdir().unwrap();
        run_ok(&[
            command,
            "--corpus",
            path_str(&corpus),
            "--seed",
            "42",
            "--out",
            path_str(tmp.path()),
        ]);
        assert_eq!(listing(tmp.path()), [file], "{command}");
        assert!(
            fs::read(tmp.path().join(file)).unwrap() == golden(file),
            "{command}: {file} differs"
        );
    }
}

#[test]
fn eval_scores_saved_predictions() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = fixture("corpus.json");
    let predictions = manifest_dir().join("tests/golden/predictions.json");
    run_ok(&[
        "eval",
        "--corpus",
        path_str(&corpus),
        "--predictions",
        path_str(&predictions),
        "--table",
        "--out",
        path_str(tmp.path()),
    ]);
    assert_eq!(listing(tmp.path()), ["eval.json", "eval.txt"]);
    assert!(fs::read(tmp.path().join("eval.json")).unwrap() == golden("eval.json"));
    assert!(fs::read(tmp.path().join("eval.txt")).unwrap() == golden("eval.txt"));
}

#[test]
fn thread_count_does_not_change_output() {
    let corpus = fixture("corpus.json");
    let mut outputs = Vec::new();
    for threads in ["1", "8"] {
        let tmp = tempfile::tempdir().unwrap();
        run_ok(&[
            "pipeline",
            "--corpus",
            path_str(&corpus),
            "--threads",
            threads,
            "--out",
            path_str(tmp.path()),
        ]);
        outputs.push(
            listing(tmp.path())
                .into_iter()
                .map(|n| fs::read(tmp.path().join(n)).unwrap())
                .collect::<Vec<_>>(),
        );
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn empty_corpus_gives_zero_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("empty.json");
    fs::write(&corpus, r#"{"d_u": 4, "conversations": []}"#).unwrap();
    let out = tmp.path().join("out");
    run_ok(&[
        "eval",
        "--corpus",
        path_str(&corpus),
        "--out",
        path_str(&out),
    ]);
    let eval: Value = serde_json::from_slice(&fs::read(out.join("eval.json")).unwrap()).unwrap();
    for key in ["tp", "fp", "fn"] {
        assert_eq!(eval["all"]["counts"][key], 0, "{key}");
    }
    assert_eq!(eval["all"]["ecpec"]["f1"], 0.0);
}

#[test]
fn malformed_conversation_is_named_in_the_error() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("bad.json");
    fs::write(
        &corpus,
        r#"{"d_u": 2, "conversations": [
            {"id": "ok", "utterances": [{"index": 1, "speaker": 0, "embedding": [0.1, 0.2], "emotion": 0, "cause": 0}], "gold_pairs": []},
            {"id": "broken_one", "utterances": [{"index": 1, "speaker": 0, "embedding": [0.1], "emotion": 0, "cause": 0}], "gold_pairs": []}
        ]}"#,
    )
    .unwrap();
    let out_dir = tmp.path().join("out");
    let out = ecpec(&[
        "pipeline",
        "--corpus",
        path_str(&corpus),
        "--out",
        path_str(&out_dir),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("broken_one"));
    assert!(!out_dir.join("predictions.json").exists());
}

#[test]
fn out_of_range_flag_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ecpec(&[
        "align",
        "--corpus",
        path_str(&fixture("corpus.json")),
        "--alpha",
        "1.5",
        "--out",
        path_str(tmp.path()),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpha"));
}

#[test]
fn flags_override_config_file_and_env() {
    let tmp = tempfile::tempdir().unwrap();
    let config_out = tmp.path().join("from_config");
    let config = tmp.path().join("run.toml");
    fs::write(
        &config,
        format!(
            "out = {:?}\nseed = 42\n\n[hyperparams]\nwindow = 1\n",
            path_str(&config_out)
        ),
    )
    .unwrap();
    let corpus = fixture("corpus.json");

    // config supplies out and window
    run_ok(&[
        "build-graph",
        "--corpus",
        path_str(&corpus),
        "--config",
        path_str(&config),
    ]);
    let narrow = fs::read(config_out.join("graphs.json")).unwrap();
    assert!(narrow != golden("graphs.json"));

    // --window wins over the config value and restores the default graph
    run_ok(&[
        "build-graph",
        "--corpus",
        path_str(&corpus),
        "--config",
        path_str(&config),
        "--window",
        "5",
    ]);
    assert!(fs::read(config_out.join("graphs.json")).unwrap() == golden("graphs.json"));

    // without --out or a config value, the environment variable decides
    let env_out = tmp.path().join("from_env");
    let status = Command::new(env!("CARGO_BIN_EXE_ecpec"))
        .args(["build-graph", "--corpus", path_str(&corpus)])
        .env("ECPEC_OUT_DIR", &env_out)
        .stdout(Stdio::null())
        .status()
        .unwrap();
    assert!(status.success());
    assert!(env_out.join("graphs.json").exists());
}
