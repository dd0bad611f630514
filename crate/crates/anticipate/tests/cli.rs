use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use anticipate::error::exit;

const SMALL: &str = r#"
seed = 7
checkpoint_every = 1

[world]
n_intentions = 4
n_sequences = 6
n_objects = 10
seq_len_range = [2, 4]

[data]
replicas = 10

[motion]
epochs = 1
windows_per_class = 20
eval_windows_per_class = 10

[train]
hidden = 8
pretrain_epochs = 2
joint_epochs = 2
samples = 2

[eval]
tau_grid = [0.0, 0.5, 1.0]
"#;

const STAGES: [&str; 7] = ["gen-data", "pretrain-motion", "pretrain-rnn", "train-joint", "eval", "sweep", "export"];

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("anticipate.toml");
    fs::write(&path, text).unwrap();
    path
}

fn anticipate(config: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_anticipate"))
        .arg("--config")
        .arg(config)
        .args(args)
        .output()
        .unwrap()
}

fn ok(config: &Path, args: &[&str]) -> String {
    let out = anticipate(config, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in ["data", "checkpoints", "reports"] {
        if !dir.join(sub).exists() {
            continue;
        }
        let mut names: Vec<_> = fs::read_dir(dir.join(sub)).unwrap().map(|e| e.unwrap().path()).collect();
        names.sort();
        for p in names {
            let rel = p.strip_prefix(dir).unwrap().to_path_buf();
            out.push((rel, fs::read(&p).unwrap()));
        }
    }
    out
}

fn run_small(dir: &Path) -> Vec<String> {
    let cfg = write_config(dir, SMALL);
    STAGES.iter().map(|s| ok(&cfg, &[s])).collect()
}

#[test]
fn small_pipeline_writes_every_artifact_deterministically() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let out = run_small(a.path());
    run_small(b.path());
    for f in [
        "data/world.json",
        "data/train.jsonl",
        "data/val.jsonl",
        "data/test.jsonl",
        "checkpoints/motion.json",
        "checkpoints/pretrain.json",
        "checkpoints/joint.json",
        "checkpoints/joint_epoch1.json",
        "checkpoints/joint_epoch2.json",
        "reports/motion_log.csv",
        "reports/motion_accuracy.csv",
        "reports/pretrain_log.csv",
        "reports/joint_log.csv",
        "reports/eval_modes.csv",
        "reports/confusion.csv",
        "reports/sweep.csv",
        "reports/sweep_series.csv",
    ] {
        assert!(a.path().join(f).exists(), "{f} missing");
    }
    assert!(out[4].contains("Mtr."), "{}", out[4]);
    let (fa, fb) = (files(a.path()), files(b.path()));
    assert_eq!(fa.len(), fb.len());
    for ((pa, da), (pb, db)) in fa.iter().zip(&fb) {
        assert_eq!(pa, pb);
        assert!(da == db, "{} differs between runs", pa.display());
    }
}

#[test]
fn gen_data_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    ok(&cfg, &["gen-data"]);
    let first = files(dir.path());
    ok(&cfg, &["gen-data"]);
    assert_eq!(first, files(dir.path()));
}

#[test]
fn missing_checkpoint_names_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    ok(&cfg, &["gen-data"]);
    let out = anticipate(&cfg, &["eval"]);
    assert_eq!(out.status.code(), Some(exit::IO));
    assert!(String::from_utf8_lossy(&out.stderr).contains("anticipate train-joint"));
    let out = anticipate(&cfg, &["pretrain-rnn"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("anticipate pretrain-motion"));
}

#[test]
fn malformed_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    for text in ["seed = \"x\"", "[train]\nhiden = 3", "[train]\nlr = -1.0", "[world]\nn_intentions = 0"] {
        let cfg = write_config(dir.path(), text);
        let out = anticipate(&cfg, &["gen-data"]);
        assert_eq!(out.status.code(), Some(exit::CONFIG), "{text}");
    }
    let out = anticipate(&dir.path().join("nope.toml"), &["print-config"]);
    assert_eq!(out.status.code(), Some(exit::CONFIG));
}

#[test]
fn checkpoint_from_another_model_size_is_a_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    for s in &STAGES[..3] {
        ok(&cfg, &[s]);
    }
    let bigger = write_config(dir.path(), &SMALL.replace("hidden = 8", "hidden = 9"));
    let out = anticipate(&bigger, &["train-joint"]);
    assert_eq!(out.status.code(), Some(exit::MISMATCH));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rnn."));
}

#[test]
fn data_with_more_intentions_than_the_model_is_a_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    ok(&cfg, &["pretrain-motion"]);
    let wide = write_config(dir.path(), &SMALL.replace("n_intentions = 4", "n_intentions = 6"));
    ok(&wide, &["gen-data"]);
    let cfg = write_config(dir.path(), SMALL);
    let out = anticipate(&cfg, &["pretrain-rnn"]);
    assert_eq!(out.status.code(), Some(exit::MISMATCH), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn print_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let text = ok(&cfg, &["print-config"]);
    let again = write_config(dir.path(), &text);
    assert_eq!(ok(&again, &["print-config"]), text);
}

#[test]
fn classify_reads_a_signal_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    ok(&cfg, &["pretrain-motion"]);
    let mut csv = String::from("t,ax,ay,az,hand\n");
    for i in 0..300 {
        let t = i as f64 / 75.0;
        csv += &format!("{t},{},0.1,-0.2,right\n", (t * 3.0).sin());
        csv += &format!("{t},0.0,1.0,0.0,left\n");
    }
    let signals = dir.path().join("signals.csv");
    fs::write(&signals, csv).unwrap();
    let out_path = dir.path().join("pred.csv");
    ok(&cfg, &["classify", signals.to_str().unwrap(), "--out", out_path.to_str().unwrap()]);
    let text = fs::read_to_string(&out_path).unwrap();
    assert!(text.starts_with("hand,window,start_t,class,confidence\n"));
    assert_eq!(text.lines().count(), 1 + 2 * 3);
}
