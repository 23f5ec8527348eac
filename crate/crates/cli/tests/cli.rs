use std::path::Path;
use std::process::{Command, Output};

fn disfl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_disfl")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&disfl(&["no-such-command"])), 1);
    assert_eq!(code(&disfl(&["nbest"])), 1);
    assert_eq!(code(&disfl(&["--help"])), 0);
    assert_eq!(code(&disfl(&["run", "--set", "no_such_key=3"])), 1);
    assert_eq!(code(&disfl(&["run", "--set", "k_folds"])), 1);
    assert_eq!(code(&disfl(&["run", "--config", "/nonexistent/run.toml"])), 1);
}

#[test]
fn missing_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = disfl(&["normalize", "/nonexistent/corpus.tsv", "-o", p(&dir.path().join("x.tsv"))]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/corpus.tsv"));
}

#[test]
fn stepwise_tools_chain_together() {
    let dir = tempfile::tempdir().unwrap();
    let f = |name: &str| dir.path().join(name);
    let ok = |args: &[&str]| {
        let out = disfl(args);
        assert_eq!(code(&out), 0, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        out
    };
    ok(&["synth", "--utterances", "200", "--seed", "3", "-o", p(&f("c.tsv"))]);
    ok(&["train-channel", p(&f("c.tsv")), "-o", p(&f("ch.json"))]);
    ok(&["train-ngram", p(&f("c.tsv")), "--order", "2", "-o", p(&f("bg.dfng"))]);
    ok(&["train-ngram", p(&f("c.tsv")), "--order", "4", "--direction", "backward", "-o", p(&f("bw.dfng"))]);
    ok(&[
        "nbest", p(&f("c.tsv")), "--channel", p(&f("ch.json")), "--bigram", p(&f("bg.dfng")), "-n", "5", "-o",
        p(&f("nb.jsonl")),
    ]);
    ok(&["extract-features", p(&f("nb.jsonl")), "--ngram-bwd", p(&f("bw.dfng")), "-o", p(&f("feat.jsonl"))]);
    let feats = std::fs::read_to_string(f("feat.jsonl")).unwrap();
    assert!(feats.lines().next().unwrap().contains("ngram4_bwd"));
    ok(&[
        "train-reranker", p(&f("nb.jsonl")), "--gold", p(&f("c.tsv")), "--ngram-bwd", p(&f("bw.dfng")), "-o",
        p(&f("rr.dfrr")),
    ]);
    // The reranker needs the LM it was trained with.
    let out = disfl(&["predict", p(&f("nb.jsonl")), "--reranker", p(&f("rr.dfrr")), "-o", p(&f("p.tsv"))]);
    assert_eq!(code(&out), 1);
    ok(&[
        "predict", p(&f("nb.jsonl")), "--reranker", p(&f("rr.dfrr")), "--ngram-bwd", p(&f("bw.dfng")), "-o",
        p(&f("p.tsv")),
    ]);
    let table = ok(&["evaluate", p(&f("c.tsv")), p(&f("p.tsv")), "--json", p(&f("e.json"))]);
    assert!(String::from_utf8_lossy(&table.stdout).starts_with("condition"));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(f("e.json")).unwrap()).unwrap();
    assert!(report["f_score"].as_f64().unwrap() > 0.5);
}

#[test]
fn run_writes_report_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = disfl(&[
        "run",
        "--set",
        "data.utterances=200",
        "--set",
        "lstm.preset=tiny",
        "--set",
        "lstm.epochs=1",
        "--set",
        "reranker.lambdas=[1e-3]",
        "--k-folds",
        "2",
        "--n-best",
        "5",
        "--out-dir",
        p(&out_dir),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("both"));
    for f in ["report.json", "report.txt", "config.toml", "provenance.json", "split.json"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let written = std::fs::read_to_string(out_dir.join("config.toml")).unwrap();
    assert!(written.contains("k_folds = 2"));
}
