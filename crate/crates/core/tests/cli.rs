use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use autocomplete::corpus::synthetic_corpus;

fn bin(args: &[&str], stdin: Option<&str>) -> Output {
    use std::io::Write;
    use std::process::Stdio;
    let mut child = Command::new(env!("CARGO_BIN_EXE_autocomplete"))
        .args(args)
        .env_remove("AUTOCOMPLETE_CORPUS")
        .env_remove("AUTOCOMPLETE_VOCAB")
        .env_remove("AUTOCOMPLETE_CHECKPOINT")
        .env_remove("AUTOCOMPLETE_OUT_DIR")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(stdin.unwrap_or("").as_bytes())
        .unwrap();
    child.wait_with_output().unwrap()
}

fn text(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned() + &String::from_utf8_lossy(&o.stderr)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn missing_config_fails_with_message() {
    let o = bin(&["train", "--config", "missing.json"], None);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("config not found"), "{err}");
    assert_eq!(err.trim().lines().count(), 1);
}

#[test]
fn malformed_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"train": {"max_step": 3}}"#).unwrap();
    let o = bin(&["train", "--config", s(&cfg), "--corpus", "x", "--out-dir", "y"], None);
    assert!(!o.status.success());
    assert!(text(&o).contains("invalid config"), "{}", text(&o));
}

#[test]
fn theory_table_matches_library() {
    let o = bin(&["theory-table"], None);
    assert!(o.status.success());
    let out = String::from_utf8_lossy(&o.stdout);
    let rows = autocomplete::metrics::em_ppl_theory_table();
    for (line, row) in out.lines().skip(1).zip(&rows) {
        assert!(line.ends_with(&format!("\t{}\t{:.2}", row.exact_match, row.nll)), "{line}");
    }
}

#[test]
fn train_eval_suggest_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let corpus = synthetic_corpus(4, 60_000);
    let (train, test) = corpus.split_at(corpus.floor_char_boundary(corpus.len() * 9 / 10));
    fs::write(d.join("train.txt"), train).unwrap();
    fs::write(d.join("test.txt"), test).unwrap();
    let run = d.join("run");
    let train_path = d.join("train.txt");
    let args = [
        "train",
        "--corpus",
        s(&train_path),
        "--out-dir",
        s(&run),
        "--steps",
        "12",
        "--set",
        "train.warmup_steps=2",
    ];
    let o = bin(&args, None);
    assert!(o.status.success(), "{}", text(&o));
    assert!(text(&o).contains("effective config"));
    for f in ["model.ckpt", "vocab.json", "loss_trace.csv", "run_config.json"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let trace = fs::read_to_string(run.join("loss_trace.csv")).unwrap();
    assert!(trace.starts_with("step,loss,lr,grad_norm"));
    assert_eq!(trace.lines().count(), 13);

    // the written config reproduces the checkpoint bit for bit
    let rerun = d.join("rerun");
    let o = bin(
        &["train", "--config", s(&run.join("run_config.json")), "--out-dir", s(&rerun)],
        None,
    );
    assert!(o.status.success(), "{}", text(&o));
    assert_eq!(fs::read(run.join("model.ckpt")).unwrap(), fs::read(rerun.join("model.ckpt")).unwrap());

    let ckpt = run.join("model.ckpt");
    let vocab = run.join("vocab.json");
    let ev = d.join("eval");
    let o = bin(
        &[
            "eval", "--checkpoint", s(&ckpt), "--vocab", s(&vocab), "--corpus", s(&d.join("test.txt")),
            "--out-dir", s(&ev), "--max-prompts", "5", "--threads", "1",
        ],
        None,
    );
    assert!(o.status.success(), "{}", text(&o));
    assert!(text(&o).contains("\"decoder\": \"greedy\""), "eval must default to greedy");
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(ev.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["n_prompts"], 5);
    assert!(fs::read_to_string(ev.join("records.csv")).unwrap().lines().count() > 1);

    let sweep = d.join("sweep");
    let o = bin(
        &[
            "eval", "--checkpoint", s(&ckpt), "--vocab", s(&vocab), "--corpus", s(&d.join("test.txt")),
            "--out-dir", s(&sweep), "--max-prompts", "3", "--context-sweep", "0.2:0.4:0.1",
        ],
        None,
    );
    assert!(o.status.success(), "{}", text(&o));
    let rows = fs::read_to_string(sweep.join("sweep.csv")).unwrap();
    assert_eq!(rows.lines().count(), 4, "{rows}");

    let o = bin(&["suggest", "--checkpoint", s(&ckpt), "--vocab", s(&vocab)], Some("the city of\n\nit was\n"));
    assert!(o.status.success(), "{}", text(&o));
    assert_eq!(String::from_utf8_lossy(&o.stdout).matches("> ").count(), 4);

    // a vocabulary of the wrong granularity is refused
    let wv = d.join("word_vocab.json");
    let o = bin(
        &["build-vocab", "--corpus", s(&d.join("train.txt")), "--granularity", "word", "--out", s(&wv)],
        None,
    );
    assert!(o.status.success());
    let o = bin(&["suggest", "--checkpoint", s(&ckpt), "--vocab", s(&wv), "--prompt", "the"], None);
    assert!(!o.status.success());
    assert!(text(&o).contains("checkpoint error"), "{}", text(&o));

    let o = bin(&["eval", "--checkpoint", s(&d.join("nope.ckpt")), "--vocab", s(&vocab), "--corpus", "x", "--out-dir", "y"], None);
    assert!(!o.status.success());
    assert!(text(&o).contains("checkpoint not found"), "{}", text(&o));
}

#[test]
fn analyses_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = bin(&["analyze-params", "--out", s(&d.join("shares.csv"))], None);
    assert!(o.status.success());
    let csv = fs::read_to_string(d.join("shares.csv")).unwrap();
    assert_eq!(csv.lines().count(), 201);

    fs::write(d.join("a.txt"), "a b c").unwrap();
    fs::write(d.join("b.txt"), "a b d").unwrap();
    let o = bin(&["analyze-oov", "--train", s(&d.join("a.txt")), "--test", s(&d.join("b.txt"))], None);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("1\t1\t3\t33.33"));
}
