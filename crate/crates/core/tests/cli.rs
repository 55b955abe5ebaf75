mod common;

use std::path::Path;

use serde_json::Value;

use common::{bin, run_cli, write};
use factforge::correct::CorrectionResult;
use factforge::evalrep::TSV_HEADER;
use factforge::read_jsonl;
use factforge::toy::TOY_CORPUS;

fn json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn toy_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("toy.jsonl"), TOY_CORPUS);
    dir
}

#[test]
fn flag_beats_file_beats_default() {
    let dir = toy_dir();
    write(
        &dir.path().join("cfg.json"),
        r#"{"gen": {"seed": 5, "rank_hi": 12}, "paths": {"corpus": "toy.jsonl"}}"#,
    );
    let out = run_cli(
        dir.path(),
        &[
            "ingest",
            "--config",
            "cfg.json",
            "--seed",
            "9",
            "--out-dir",
            "a",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let cfg = json(&dir.path().join("a/config.resolved.json"));
    assert_eq!(cfg["gen"]["seed"], 9);
    assert_eq!(cfg["gen"]["rank_hi"], 12);
    assert_eq!(cfg["gen"]["rank_lo"], 5);
    assert_eq!(cfg["passages"]["top_k"], 3);
}

#[test]
fn config_path_from_environment() {
    let dir = toy_dir();
    write(
        &dir.path().join("cfg.json"),
        r#"{"gen": {"seed": 5}, "paths": {"corpus": "toy.jsonl", "out_dir": "env"}}"#,
    );
    let out = bin()
        .current_dir(dir.path())
        .env("FACTFORGE_CONFIG", "cfg.json")
        .arg("ingest")
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(
        json(&dir.path().join("env/config.resolved.json"))["gen"]["seed"],
        5
    );
}

#[test]
fn config_errors_exit_2() {
    let dir = toy_dir();
    write(&dir.path().join("typo.json"), r#"{"gen": {"sed": 1}}"#);
    write(&dir.path().join("broken.json"), "{");
    for args in [
        vec!["gen-adv", "--corpus", "toy.jsonl", "--rank-lo", "20"],
        vec!["gen-adv", "--config", "typo.json"],
        vec!["gen-adv", "--config", "broken.json"],
        vec!["gen-adv", "--config", "missing.json"],
        vec!["correct", "--corrector", "neural"],
    ] {
        let out = run_cli(dir.path(), &args);
        assert_eq!(
            out.status.code(),
            Some(2),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let out = run_cli(
        dir.path(),
        &[
            "gen-adv",
            "--corpus",
            "toy.jsonl",
            "--rank-lo",
            "20",
            "--rank-hi",
            "3",
        ],
    );
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("gen.rank_lo") || err.contains("gen.rank_hi"),
        "{err}"
    );
}

#[test]
fn runtime_errors_exit_1() {
    let dir = toy_dir();
    let out = run_cli(dir.path(), &["ingest", "--corpus", "nope.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run_cli(dir.path(), &["ingest"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("corpus"));
    // gen-adv without a trained model.
    let out = run_cli(
        dir.path(),
        &["gen-adv", "--corpus", "toy.jsonl", "--out-dir", "empty"],
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn duplicate_ids_are_fatal_and_bad_lines_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let first = TOY_CORPUS.lines().next().unwrap();
    write(
        &dir.path().join("dup.jsonl"),
        &format!("{first}\n{first}\n"),
    );
    assert_eq!(
        run_cli(dir.path(), &["ingest", "--corpus", "dup.jsonl"])
            .status
            .code(),
        Some(1)
    );

    write(
        &dir.path().join("bad.jsonl"),
        &format!("{first}\nnot json\n{{\"id\": \"x\"}}\n"),
    );
    let out = run_cli(
        dir.path(),
        &[
            "ingest",
            "--corpus",
            "bad.jsonl",
            "--out-dir",
            "o",
            "--load-report",
            "load.json",
        ],
    );
    assert!(out.status.success());
    let report = json(&dir.path().join("load.json"));
    assert_eq!(report["loaded"], 1);
    let lines: Vec<u64> = report["skipped"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["line"].as_u64().unwrap())
        .collect();
    assert_eq!(lines, [2, 3]);
    assert_eq!(
        json(&dir.path().join("o/reports/ingest.summary.json"))["stats"]["skipped_lines"],
        2
    );
}

#[test]
fn gen_adv_is_reproducible() {
    let dir = toy_dir();
    let base = ["--corpus", "toy.jsonl", "--out-dir", "o", "--seed", "3"];
    let run = |stage: &str| {
        let mut args = vec![stage];
        args.extend(base);
        let out = run_cli(dir.path(), &args);
        assert!(
            out.status.success(),
            "{stage}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    };
    run("train-infill");
    run("gen-adv");
    let first = std::fs::read(dir.path().join("o/adversarial.jsonl")).unwrap();
    run("gen-adv");
    assert_eq!(
        first,
        std::fs::read(dir.path().join("o/adversarial.jsonl")).unwrap()
    );

    let out = run_cli(
        dir.path(),
        &[
            "gen-adv",
            "--corpus",
            "toy.jsonl",
            "--out-dir",
            "o",
            "--seed",
            "4",
        ],
    );
    assert!(out.status.success());
    assert_ne!(
        first,
        std::fs::read(dir.path().join("o/adversarial.jsonl")).unwrap()
    );
}

#[test]
fn pipeline_writes_reports() {
    let dir = toy_dir();
    let out = run_cli(
        dir.path(),
        &[
            "pipeline",
            "--corpus",
            "toy.jsonl",
            "--out-dir",
            "o",
            "--dump-passages",
            "passages.jsonl",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let o = dir.path().join("o");
    for stage in [
        "ingest",
        "train-infill",
        "gen-adv",
        "build-dataset",
        "correct",
        "eval",
    ] {
        let summary = json(&o.join(format!("reports/{stage}.summary.json")));
        assert_eq!(summary["stage"], stage);
        for path in summary["outputs"].as_object().unwrap().values() {
            let rel = path.as_str().unwrap();
            assert!(!Path::new(rel).is_absolute(), "{stage}: {rel}");
            assert!(o.join(rel).exists(), "{stage}: {rel}");
        }
    }
    let tsv = std::fs::read_to_string(o.join("reports/eval_report.tsv")).unwrap();
    assert_eq!(tsv.lines().next(), Some(TSV_HEADER));
    let report = json(&o.join("reports/eval_report.json"));
    assert_eq!(
        tsv.lines().count(),
        1 + report["n_summaries"].as_u64().unwrap() as usize
    );
    let restoration = &report["restoration"];
    assert!(restoration["restoration_rate"].as_f64().unwrap() > 0.5);
    assert_eq!(restoration["false_edits"], 0);
    assert!(dir.path().join("passages.jsonl").exists());
}

#[test]
fn misaligned_eval_exits_1() {
    let dir = toy_dir();
    let out = run_cli(
        dir.path(),
        &["pipeline", "--corpus", "toy.jsonl", "--out-dir", "o"],
    );
    assert!(out.status.success());
    let path = dir.path().join("o/corrected.jsonl");
    let mut results: Vec<CorrectionResult> = read_jsonl(&path).unwrap();
    results.pop();
    factforge::write_jsonl(&path, &results).unwrap();
    let out = run_cli(
        dir.path(),
        &[
            "eval",
            "--corpus",
            "toy.jsonl",
            "--out-dir",
            "o",
            "--source",
            "adversarial",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("align"),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn corpus_summaries_against_references() {
    let dir = toy_dir();
    let out = run_cli(
        dir.path(),
        &[
            "correct",
            "--corpus",
            "toy.jsonl",
            "--out-dir",
            "o",
            "--corrector",
            "identity",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let results: Vec<CorrectionResult> = read_jsonl(&dir.path().join("o/corrected.jsonl")).unwrap();
    assert_eq!(results.len(), 20);
    assert!(results.iter().all(|r| !r.any_changed()));

    // Without references there is nothing to score against.
    let out = run_cli(
        dir.path(),
        &["eval", "--corpus", "toy.jsonl", "--out-dir", "o"],
    );
    assert_eq!(out.status.code(), Some(1));

    let out = run_cli(
        dir.path(),
        &[
            "eval",
            "--corpus",
            "toy.jsonl",
            "--out-dir",
            "o",
            "--references",
            "toy.jsonl",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = json(&dir.path().join("o/reports/eval_report.json"));
    assert_eq!(report["rouge1"], 1.0);
    assert_eq!(report["rougeL"], 1.0);
    assert!(report["restoration"].is_null());
}

#[test]
fn ablation_flags_shape_the_dataset() {
    let dir = toy_dir();
    let base = ["--corpus", "toy.jsonl", "--out-dir", "o"];
    for stage in ["train-infill", "gen-adv"] {
        let mut args = vec![stage];
        args.extend(base);
        assert!(run_cli(dir.path(), &args).status.success());
    }
    let mut args = vec!["build-dataset", "--no-summ-ctxt"];
    args.extend(base);
    assert!(run_cli(dir.path(), &args).status.success());
    let lines: Vec<Value> = read_jsonl(&dir.path().join("o/dataset.jsonl")).unwrap();
    assert!(lines
        .iter()
        .all(|l| l["input"].as_str().unwrap().matches("[SEP]").count() == 1));

    let mut args = vec!["build-dataset"];
    args.extend(base);
    assert!(run_cli(dir.path(), &args).status.success());
    let lines: Vec<Value> = read_jsonl(&dir.path().join("o/dataset.jsonl")).unwrap();
    assert!(lines
        .iter()
        .all(|l| l["input"].as_str().unwrap().matches("[SEP]").count() == 2));
}
