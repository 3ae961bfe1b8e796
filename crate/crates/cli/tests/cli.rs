//! End-to-end runs of the `chordgram` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chordgram::hmm::HmmParams;

const NAMES: [&str; 14] = ["C", "F", "G", "Am", "Em", "Dm7", "G7", "Dm", "E7", "Em7", "B♭", "Am7", "FM7", "Fm"];

/// A corpus sampled from a random 3-state HMM over 14 chord names.
fn write_corpus(dir: &Path, n: usize) -> PathBuf {
    let h = HmmParams::init_random(3, NAMES.len(), 42).unwrap();
    let mut text = String::new();
    for i in 0..n {
        let len = 4 + (i % 7);
        let seq = h.sample_sequence(len, i as u64);
        let line: Vec<&str> = seq.iter().map(|&x| NAMES[x]).collect();
        text.push_str(&line.join(" "));
        text.push('\n');
    }
    // one length-1 line that min_length drops
    text.push_str("C\n");
    let path = dir.join("corpus.txt");
    fs::write(&path, text).unwrap();
    path
}

fn chordgram(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chordgram")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = chordgram(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let corpus = write_corpus(dir, 80);
    let path = dir.join("config.toml");
    let text = format!(
        "corpus = {:?}\nout_dir = {:?}\nvocab_size = 10\ntest_count = 20\ntrain_sizes = [10, 30]\n{body}",
        corpus,
        dir.join("out")
    );
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn prepare_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let cfg = cfg.to_str().unwrap();
    let summary: serde_json::Value = serde_json::from_str(&ok(&["prepare", "--config", cfg])).unwrap();
    assert_eq!(summary["vocab_size"], 11);
    assert_eq!(summary["dropped_short"], 1);
    assert_eq!(summary["test"], 20);
    assert_eq!(summary["train"], 60);
    let out = dir.path().join("out");
    let snapshot = |names: &[&str]| names.iter().map(|n| fs::read(out.join(n)).unwrap()).collect::<Vec<_>>();
    let files = ["vocab.txt", "train.txt", "test.txt", "train_n10.txt", "train_n30.txt"];
    let first = snapshot(&files);
    ok(&["prepare", "--config", cfg]);
    assert_eq!(first, snapshot(&files));
    let vocab = String::from_utf8(first[0].clone()).unwrap();
    assert!(vocab.lines().last().unwrap().starts_with("10\tOther\t"));
}

#[test]
fn bad_input_reports_json_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = chordgram(&["prepare", "--config", cfg.to_str().unwrap(), "--test-count", "500"]);
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["error"].as_str().unwrap().contains("test_count"));

    let out = chordgram(&["train", "--corpus", "/nonexistent", "--out-dir", "/nonexistent", "--size", "2", "--algo", "em"]);
    assert!(!out.status.success());
    assert!(serde_json::from_slice::<serde_json::Value>(&out.stderr).is_ok());
}

#[test]
fn train_writes_model_and_monotone_log() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[hyper]\nhmm_em_iters = 40\n");
    let cfg = cfg.to_str().unwrap();
    ok(&["prepare", "--config", cfg]);
    let row: serde_json::Value = serde_json::from_str(&ok(&[
        "train", "--config", cfg, "--size", "3", "--algo", "em", "--seed", "1", "--n-train", "30",
    ]))
    .unwrap();
    assert_eq!(row["param_count"], 38); // (1+3)(3-1) + 3(11-1)
    assert_eq!(row["n_x"], 30);
    assert!(row["test_perplexity"].as_f64().unwrap() >= 1.0);
    let model = dir.path().join("out/models/hmm-em-n30-size3-seed1.model");
    assert!(fs::read_to_string(&model).unwrap().starts_with("#chordgram-model v1\nkind hmm\n"));
    let log = fs::read_to_string(model.with_extension("log.csv")).unwrap();
    let lls: Vec<f64> = log.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert!(lls.len() > 1);
    for w in lls.windows(2) {
        assert!(w[1] >= w[0] - 1e-9 * w[0].abs());
    }
}

#[test]
fn sweep_grid_rows_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[model]\nkind = \"hmm\"\nsizes = [1, 2, 4]\nalgos = [\"em\"]\nseeds = [0, 1]\n[hyper]\nhmm_em_iters = 20\n",
    );
    let cfg = cfg.to_str().unwrap();
    ok(&["prepare", "--config", cfg, "--train-sizes", "30"]);
    ok(&["sweep", "--config", cfg, "--train-sizes", "30"]);
    let mut reader = csv::Reader::from_path(dir.path().join("out/results.csv")).unwrap();
    let rows: Vec<chordgram_cli::ResultRow> = reader.deserialize().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 6);
    for r in &rows {
        assert!(r.is_ok(), "{}", r.status);
        assert!(r.train_perplexity >= 1.0 && r.test_perplexity >= 1.0);
        assert!((0.0..=1.0).contains(&r.error_rate));
        assert!(r.rmrr >= 1.0);
        assert_eq!(r.param_count, chordgram::param_count(chordgram::ModelKind::Hmm, r.size, 11));
    }
    for size in [1, 2, 4] {
        assert_eq!(rows.iter().filter(|r| r.size == size && r.best_by_train).count(), 1);
        assert_eq!(rows.iter().filter(|r| r.size == size && r.best_by_test).count(), 1);
    }
}

#[test]
fn markov_and_pcfg_sweeps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let cfg = cfg.to_str().unwrap();
    ok(&["prepare", "--config", cfg]);
    ok(&["sweep", "--config", cfg, "--kind", "markov", "--sizes", "1,2", "--train-sizes", "10"]);
    let text = fs::read_to_string(dir.path().join("out/results.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 3);
    assert!(text.lines().skip(1).all(|l| l.ends_with(",ok")));
    ok(&[
        "sweep", "--config", cfg, "--kind", "pcfg", "--sizes", "2", "--seeds", "0", "--train-sizes", "10",
        "--pcfg-init", "hmm",
    ]);
    let text = fs::read_to_string(dir.path().join("out/results.csv")).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().skip(1).all(|l| l.ends_with(",ok")), "{text}");
}

#[test]
fn analyze_and_generate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[hyper]\nhmm_em_iters = 10\npcfg_em_iters = 5\n");
    let cfg = cfg.to_str().unwrap();
    ok(&["prepare", "--config", cfg]);
    let vocab = dir.path().join("out/vocab.txt");
    let vocab = vocab.to_str().unwrap();
    let hmm = dir.path().join("hmm.model");
    ok(&["train", "--config", cfg, "--size", "2", "--algo", "em", "--n-train", "10", "--output", hmm.to_str().unwrap()]);
    let report: serde_json::Value = serde_json::from_str(&ok(&["analyze", "--model", hmm.to_str().unwrap(), "--vocab", vocab])).unwrap();
    assert_eq!(report["kind"], "hmm");
    assert_eq!(report["states"][0]["top_symbols"].as_array().unwrap().len(), 11);
    let p = report["stationary_perplexity"].as_f64().unwrap();
    assert!((1.0..=2.0 + 1e-9).contains(&p));

    assert!(!chordgram(&["generate", "--model", hmm.to_str().unwrap(), "--vocab", vocab]).status.success());
    let a = ok(&["generate", "--model", hmm.to_str().unwrap(), "--vocab", vocab, "--length", "6", "--count", "3", "--seed", "4"]);
    let b = ok(&["generate", "--model", hmm.to_str().unwrap(), "--vocab", vocab, "--length", "6", "--count", "3", "--seed", "4"]);
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 3);
    assert!(a.lines().all(|l| l.split(' ').count() == 6));

    let pcfg = dir.path().join("pcfg.model");
    ok(&[
        "train", "--config", cfg, "--kind", "pcfg", "--size", "2", "--algo", "em", "--n-train", "10", "--output",
        pcfg.to_str().unwrap(),
    ]);
    let trees = ok(&["generate", "--model", pcfg.to_str().unwrap(), "--vocab", vocab, "--count", "2", "--trees"]);
    assert!(trees.lines().all(|l| l.starts_with("(S ")));
    let report: serde_json::Value = serde_json::from_str(&ok(&["analyze", "--model", pcfg.to_str().unwrap(), "--vocab", vocab])).unwrap();
    assert_eq!(report["kind"], "pcfg");
    assert_eq!(report["threshold"], 0.05);

    let markov = dir.path().join("markov.model");
    ok(&[
        "train", "--config", cfg, "--kind", "markov", "--size", "1", "--algo", "mkn", "--output",
        markov.to_str().unwrap(),
    ]);
    assert!(!chordgram(&["analyze", "--model", markov.to_str().unwrap(), "--vocab", vocab]).status.success());
}
