use std::path::Path;
use std::process::{Command, Output};

use fsdlab::io;

const SMOKE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/smoke.json");

fn fsdlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fsdlab")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = fsdlab(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn error_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stderr).expect("stderr is one JSON object")
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

#[test]
fn verbs_chain_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["gen", "--config", SMOKE, "--out", &p(d, "corpus.jsonl")]);
    ok(&["train", "--config", SMOKE, "--corpus", &p(d, "corpus.jsonl"), "--out", &p(d, "model.bin")]);
    ok(&["finetune", "--config", SMOKE, "--model", &p(d, "model.bin"), "--dataset", &p(d, "corpus.jsonl"), "--out", &p(d, "tuned.bin"), "--compose", "all"]);
    ok(&["score", "--model", &p(d, "model.bin"), "--tuned", &p(d, "tuned.bin"), "--dataset", &p(d, "test.jsonl"), "--out", &p(d, "scores.csv"), "--k", "100"]);
    ok(&["eval", "--scores", &p(d, "scores.csv"), "--report", &p(d, "report.json"), "--csv", &p(d, "report.csv")]);

    let (records, functions) = io::read_scores(&d.join("scores.csv")).unwrap();
    assert_eq!(functions.len(), 4);
    let ppl: Vec<_> = records.iter().filter(|r| r.function.name() == "perplexity").collect();
    let mink: Vec<_> = records.iter().filter(|r| r.function.name() == "mink").collect();
    assert_eq!(ppl.len(), mink.len());
    for (a, b) in ppl.iter().zip(&mink) {
        assert_eq!(a.id, b.id);
        assert!((b.base_score - a.base_score.ln()).abs() < 1e-9);
    }
    let csv = std::fs::read_to_string(d.join("report.csv")).unwrap();
    assert!(csv.starts_with("fn,k,variant,metric,value\n"));
    assert_eq!(csv.lines().count(), 1 + 4 * 2 * 3);
}

#[test]
fn tuned_equal_to_base_gives_degenerate_fsd() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["gen", "--config", SMOKE, "--out", &p(d, "corpus.jsonl")]);
    ok(&["train", "--config", SMOKE, "--corpus", &p(d, "corpus.jsonl"), "--out", &p(d, "model.bin")]);
    ok(&["eval", "--config", SMOKE, "--model", &p(d, "model.bin"), "--dataset", &p(d, "corpus.jsonl"), "--report", &p(d, "r.json"), "--tuned-equals-base"]);
    let r: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("r.json")).unwrap()).unwrap();
    for f in r["results"].as_array().unwrap() {
        assert_eq!(f["fsd"]["auc"], 0.5);
    }
}

#[test]
fn ablation_and_shift_reports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["gen", "--config", SMOKE, "--out", &p(d, "corpus.jsonl")]);
    ok(&["train", "--config", SMOKE, "--corpus", &p(d, "corpus.jsonl"), "--out", &p(d, "model.bin")]);
    let base = ["eval", "--config", SMOKE, "--model", &p(d, "model.bin"), "--dataset", &p(d, "corpus.jsonl")];
    ok(&[&base[..], &["--report", &p(d, "abl.json"), "--csv", &p(d, "abl.csv"), "--ablate-sizes", "0,5,10"]].concat());
    let abl: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("abl.json")).unwrap()).unwrap();
    assert_eq!(abl.as_array().unwrap().len(), 3);
    assert!(std::fs::read_to_string(d.join("abl.csv")).unwrap().starts_with("size,fn,"));
    ok(&[&base[..], &["--report", &p(d, "shift.json"), "--shift", "deletion"]].concat());
    let shift: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("shift.json")).unwrap()).unwrap();
    assert_eq!(shift[1]["transform"], "deletion");
}

#[test]
fn failures_map_to_documented_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    let out = fsdlab(&["gen", "--config", &p(d, "nope.json"), "--out", &p(d, "c.jsonl")]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_json(&out)["error"], "io");

    std::fs::write(d.join("bad.json"), r#"{"model": {}}"#).unwrap();
    let out = fsdlab(&["gen", "--config", &p(d, "bad.json"), "--out", &p(d, "c.jsonl")]);
    assert_eq!(out.status.code(), Some(4));

    let out = fsdlab(&["gen", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"], "usage");

    std::fs::write(d.join("c.jsonl"), "{\"input\":\"x\"}\n").unwrap();
    let out = fsdlab(&["train", "--config", SMOKE, "--corpus", &p(d, "c.jsonl"), "--out", &p(d, "m.bin")]);
    assert_eq!(out.status.code(), Some(6));
    assert!(error_json(&out)["message"].as_str().unwrap().contains(":1:"));

    ok(&["gen", "--config", SMOKE, "--out", &p(d, "corpus.jsonl")]);
    ok(&["train", "--config", SMOKE, "--corpus", &p(d, "corpus.jsonl"), "--out", &p(d, "m.bin")]);
    std::fs::write(d.join("members.jsonl"), "{\"input\":\"a\",\"label\":1}\n{\"input\":\"b\",\"label\":1}\n").unwrap();
    let out = fsdlab(&["score", "--model", &p(d, "m.bin"), "--dataset", &p(d, "members.jsonl"), "--out", &p(d, "s.csv")]);
    assert!(out.status.success());
    let out = fsdlab(&["eval", "--scores", &p(d, "s.csv"), "--report", &p(d, "r.json")]);
    assert_eq!(out.status.code(), Some(5));
    assert_eq!(error_json(&out)["error"], "degenerate");

    std::fs::write(d.join("m.bin"), b"FSDLM\0").unwrap();
    let out = fsdlab(&["score", "--model", &p(d, "m.bin"), "--dataset", &p(d, "members.jsonl"), "--out", &p(d, "s.csv")]);
    assert_eq!(out.status.code(), Some(6));
}
