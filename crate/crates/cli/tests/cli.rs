use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nowcast::net::load_checkpoint;
use nowcast::pipeline::{self, RunManifest};

const SYNTH_CFG: &str = "seed = 4
[corpus]
scenes = 6
frames_per_scene = 26
height = 16
width = 16
";

const TRAIN_CFG: &str = "seed = 4
[train]
epochs = 1
lr = 0.001
[net]
channels = 4, 4, 4
";

fn nowcast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nowcast"))
        .args(args)
        .env_remove(pipeline::SEED_ENV)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = nowcast(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn synth(root: &Path) -> PathBuf {
    let cfg = write(root, "synth.cfg", SYNTH_CFG);
    let out = root.join("corpus");
    ok(&["synth", "--config", p(&cfg), "--out", p(&out)]);
    out
}

fn train(root: &Path, corpus: &Path, variant: &str, name: &str) -> PathBuf {
    let cfg = write(root, "train.cfg", TRAIN_CFG);
    let out = root.join(name);
    ok(&[
        "train", "--config", p(&cfg), "--corpus", p(corpus), "--variant", variant, "--out", p(&out),
    ]);
    out.join(nowcast::trainer::BEST_CHECKPOINT)
}

#[test]
fn synth_is_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (ca, cb) = (synth(a.path()), synth(b.path()));
    let (ma, mb) = (RunManifest::load(&ca).unwrap(), RunManifest::load(&cb).unwrap());
    assert_eq!(ma.output_hash, mb.output_hash);
    assert_eq!(ma.command, "synth");
    assert_eq!(ma.seed, 4);

    // Rerunning into the same directory replaces the corpus in place.
    synth(a.path());
    assert_eq!(RunManifest::load(&ca).unwrap().output_hash, ma.output_hash);
}

#[test]
fn seed_flag_changes_the_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let base = synth(dir.path());
    let cfg = dir.path().join("synth.cfg");
    let other = dir.path().join("other");
    ok(&["synth", "--config", p(&cfg), "--seed", "5", "--out", p(&other)]);
    let (a, b) = (RunManifest::load(&base).unwrap(), RunManifest::load(&other).unwrap());
    assert_eq!(b.seed, 5);
    assert_ne!(a.output_hash, b.output_hash);
}

#[test]
fn print_config_echoes_effective_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "synth.cfg", SYNTH_CFG);
    let text = ok(&["synth", "--config", p(&cfg), "--seed", "9", "--print-config"]);
    assert!(text.contains("seed = 9"), "{text}");
    assert!(text.contains("height = 16") || text.contains("corpus.height = 16"), "{text}");
}

#[test]
fn usage_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.cfg");
    let out = nowcast(&["synth", "--config", p(&missing), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));

    let bad = write(dir.path(), "bad.cfg", "[corpus]\nheigth = 16\n");
    let out = nowcast(&["synth", "--config", p(&bad), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("heigth"));

    let out = nowcast(&["train", "--variant", "GRU+Magic", "--corpus", p(dir.path()), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("GRU+WMAE+Adv+Atn"), "tags listed: {err}");

    let out = nowcast(&["eval", "--hours", "0,7", "--print-config"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_corpus_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("empty");
    fs::create_dir_all(&corpus).unwrap();
    fs::write(corpus.join(pipeline::MANIFEST_FILE), "garbage\n").unwrap();
    let cfg = write(dir.path(), "train.cfg", TRAIN_CFG);
    let out = nowcast(&["train", "--config", p(&cfg), "--corpus", p(&corpus), "--out", p(&dir.path().join("t"))]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn train_eval_predict_report() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let corpus = synth(root);

    let plain = train(root, &corpus, "GRU+WMAE", "plain");
    let state = load_checkpoint(&plain).unwrap();
    assert!(state.params.iter().all(|(_, n, _)| !n.starts_with("disc.") && !n.starts_with("attn.")));
    let train_run = RunManifest::load(plain.parent().unwrap()).unwrap();
    assert_eq!(train_run.command, "train");
    assert!(plain.parent().unwrap().join(nowcast::trainer::LEDGER_FILE).exists());

    let atn = train(root, &corpus, "GRU+WMAE+Atn", "atn");

    // Eval with baselines, restricted hours.
    let eval_dir = root.join("eval");
    ok(&[
        "eval",
        "--checkpoint",
        p(&plain),
        "--corpus",
        p(&corpus),
        "--split",
        "test",
        "--hours",
        "0,2",
        "--thresholds",
        "0.5,1,5",
        "--with-baselines",
        "--out",
        p(&eval_dir),
    ]);
    let reports = pipeline::read_reports(&eval_dir).unwrap();
    let models: Vec<&str> = reports.iter().map(|r| r.model.as_str()).collect();
    assert_eq!(models, ["GRU+WMAE", "Last 10min", "Last 20min", "Extrapolation"]);
    for r in &reports {
        assert_eq!(r.hours.iter().map(|h| h.hour).collect::<Vec<_>>(), [0, 2]);
        assert_eq!(r.hours[0].thresholds.len(), 3);
    }
    for f in ["csi_vs_threshold.svg", "hss_vs_threshold.svg", "performance_diagram.svg", pipeline::PERF_CSV] {
        assert!(eval_dir.join(f).exists(), "{f}");
    }
    let header = fs::read_to_string(eval_dir.join(pipeline::REPORT_CSV)).unwrap();
    assert!(header.starts_with("model,split,hour,threshold"));

    // Prediction: grids per hour, attention maps only for the Atn variant.
    let pred_plain = root.join("pred_plain");
    ok(&["predict", "--checkpoint", p(&plain), "--corpus", p(&corpus), "--out", p(&pred_plain)]);
    assert!(pred_plain.join("pred_h0.nwg").exists() && pred_plain.join("pred_h2.nwg").exists());
    assert!(!pred_plain.join("attn_h0.nwg").exists());
    assert!(pred_plain.join("panel.png").exists());

    let pred_atn = root.join("pred_atn");
    ok(&["predict", "--checkpoint", p(&atn), "--corpus", p(&corpus), "--out", p(&pred_atn)]);
    assert!(pred_atn.join("attn_h1.nwg").exists());

    let again = root.join("pred_plain_again");
    ok(&["predict", "--checkpoint", p(&plain), "--corpus", p(&corpus), "--out", p(&again)]);
    assert_eq!(
        RunManifest::load(&pred_plain).unwrap().output_hash,
        RunManifest::load(&again).unwrap().output_hash
    );

    let out = nowcast(&[
        "predict", "--checkpoint", p(&plain), "--corpus", p(&corpus), "--anchor", "1999-01-01 00:00", "--out",
        p(&root.join("nowhere")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let out = nowcast(&[
        "predict", "--checkpoint", p(&plain), "--corpus", p(&corpus), "--anchor", "yesterday", "--out",
        p(&root.join("nowhere")),
    ]);
    assert_eq!(out.status.code(), Some(2));

    // Report merges eval runs and drops duplicates.
    let eval_atn = root.join("eval_atn");
    ok(&["eval", "--checkpoint", p(&atn), "--corpus", p(&corpus), "--hours", "0,2", "--thresholds", "0.5,1,5", "--out", p(&eval_atn)]);
    let rep = root.join("report");
    let table = ok(&["report", "--input", p(&eval_dir), "--input", p(&eval_atn), "--input", p(&eval_dir), "--out", p(&rep)]);
    assert!(table.contains("GRU+WMAE+Atn"));
    let merged = pipeline::read_reports(&rep).unwrap();
    assert_eq!(merged.len(), 5);
    assert!(rep.join("summary.md").exists());
    assert_eq!(RunManifest::load(&rep).unwrap().command, "report");
}
