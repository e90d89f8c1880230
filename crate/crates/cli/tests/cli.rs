use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

use egopose::ensemble::{KeyedPredictions, ScoredPose};
use egopose::hand::HandModelConfig;
use egopose::io;
use egopose::pose::{JointSet, Pose3D, Unit};
use egopose::training::{cosine_lr, TrainHistory};

fn egopose(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_egopose")).args(args).output().expect("spawn egopose");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn hand_pose(shift: [f64; 3]) -> Pose3D {
    let joints = (0..21)
        .map(|j| {
            let base = [j as f64 * 7.0, (j % 5) as f64 * 11.0 - 20.0, 400.0 + (j % 3) as f64 * 9.0];
            std::array::from_fn(|d| base[d] + shift[d])
        })
        .collect();
    Pose3D::new(joints, Unit::Mm, JointSet::Hand21).unwrap()
}

fn tiny_config(dir: &Path) -> std::path::PathBuf {
    let mut table = toml::Table::new();
    let hand = HandModelConfig {
        max_grid: 4,
        ..HandModelConfig::tiny()
    };
    table.insert("hand".into(), toml::Value::try_from(hand).unwrap());
    let mut train = toml::Table::new();
    train.insert("max_steps".into(), toml::Value::Integer(5));
    train.insert("batch_size".into(), toml::Value::Integer(3));
    table.insert("train".into(), toml::Value::Table(train));
    let path = dir.join("tiny.toml");
    std::fs::write(&path, toml::to_string(&table).unwrap()).unwrap();
    path
}

#[test]
fn eval_matches_hand_computed_mean() {
    let dir = tempfile::tempdir().unwrap();
    let gt = BTreeMap::from([("a".to_string(), hand_pose([0.0; 3])), ("b".to_string(), hand_pose([0.0; 3]))]);
    // Rigid shifts of 3 mm and 5 mm: MPJPE 4, PA-MPJPE 0.
    let pred = BTreeMap::from([
        ("a".to_string(), hand_pose([3.0, 0.0, 0.0])),
        ("b".to_string(), hand_pose([0.0, 4.0, 3.0])),
    ]);
    let (gp, pp, out) = (dir.path().join("gt.jsonl"), dir.path().join("pred.jsonl"), dir.path().join("m.json"));
    io::write_annotations(&gp, &gt).unwrap();
    io::write_annotations(&pp, &pred).unwrap();
    let (code, err) = egopose(&["eval", "--pred", s(&pp), "--gt", s(&gp), "--out", s(&out)]);
    assert_eq!(code, 0, "{err}");
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!((m["mpjpe"].as_f64().unwrap() - 4.0).abs() < 1e-12);
    assert!(m["pa_mpjpe"].as_f64().unwrap().abs() < 1e-9);
    assert_eq!(m["num_samples"], 2);
}

#[test]
fn single_member_ensemble_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let preds: KeyedPredictions = (0..5)
        .map(|i| (format!("p{i}"), ScoredPose { pose: hand_pose([i as f64, -0.5, 2.0]), score: 0.25 + i as f64 / 10.0 }))
        .collect();
    let (src, dst) = (dir.path().join("one.jsonl"), dir.path().join("fused.jsonl"));
    io::write_predictions(&src, &preds).unwrap();
    let (code, err) = egopose(&["ensemble", s(&src), "--out", s(&dst)]);
    assert_eq!(code, 0, "{err}");
    let fused = io::load_predictions(&dst).unwrap();
    assert_eq!(fused.len(), preds.len());
    for (id, p) in &preds {
        assert_eq!(fused[id].pose, p.pose, "{id}");
    }
}

#[test]
fn bad_flag_and_bad_config_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(egopose(&["synth", "hand", "--bogus"]).0, 2);
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[nonsense]\nx = 1\n").unwrap();
    let (code, err) = egopose(&["synth", "hand", "--n", "2", "--out", s(&dir.path().join("d"))]);
    assert_eq!(code, 0, "{err}");
    let (d, r) = (dir.path().join("d"), dir.path().join("r"));
    let args = ["train", "hand", "--data", s(&d), "--out", s(&r), "--config", s(&cfg)];
    let (code, err) = egopose(&args);
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("nonsense"), "{err}");
}

#[test]
fn synth_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["x", "y"] {
        let (code, err) = egopose(&["synth", "prof", "--n", "6", "--n-val", "3", "--seed", "4", "--out", s(&dir.path().join(name))]);
        assert_eq!(code, 0, "{err}");
    }
    for f in ["manifest.json", "train.jsonl", "val.jsonl"] {
        let a = std::fs::read(dir.path().join("x").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("y").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn train_follows_cosine_schedule_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let (data, run, rep) = (dir.path().join("data"), dir.path().join("run"), dir.path().join("report"));
    assert_eq!(egopose(&["synth", "hand", "--n", "6", "--n-val", "3", "--out", s(&data)]).0, 0);
    let (code, err) = egopose(&["train", "hand", "--data", s(&data), "--config", s(&cfg), "--out", s(&run)]);
    assert_eq!(code, 0, "{err}");

    let h: TrainHistory = io::load_json(&run.join("history.json")).unwrap();
    assert_eq!(h.steps.len(), 5);
    for r in &h.steps {
        assert_eq!(r.lr, cosine_lr(r.step, 5, 1e-4).unwrap(), "step {}", r.step);
        assert!(r.loss.is_finite());
    }
    let resolved = std::fs::read_to_string(run.join("resolved_config.toml")).unwrap();
    assert!(resolved.contains("max_steps = 5"), "{resolved}");
    for f in ["best.safetensors", "final.safetensors", "history.csv", "predictions_val.jsonl"] {
        assert!(run.join(f).is_file(), "{f}");
    }

    let metrics = dir.path().join("m.json");
    let pv = run.join("predictions_val.jsonl");
    let (code, err) = egopose(&["eval", "--pred", s(&pv), "--gt", s(&data.join("val.jsonl")), "--out", s(&metrics)]);
    assert_eq!(code, 0, "{err}");
    let hist = run.join("history.csv");
    let args = ["report", "--history", s(&hist), "--eval", s(&metrics), "--out", s(&rep)];
    let (code, err) = egopose(&args);
    assert_eq!(code, 0, "{err}");
    for f in ["loss_curve.svg", "lr_curve.svg", "metrics.svg", "summary.md"] {
        assert!(rep.join(f).is_file(), "{f}");
    }
}

#[test]
fn predict_writes_one_record_per_sample() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let (data, run) = (dir.path().join("data"), dir.path().join("run"));
    assert_eq!(egopose(&["synth", "hand", "--n", "4", "--n-val", "3", "--out", s(&data)]).0, 0);
    assert_eq!(egopose(&["train", "hand", "--data", s(&data), "--config", s(&cfg), "--out", s(&run)]).0, 0);
    let out = dir.path().join("p.jsonl");
    let ck = run.join("final.safetensors");
    let (code, err) = egopose(&["predict", "--checkpoint", s(&ck), "--data", s(&data), "--split", "val", "--out", s(&out), "--tta"]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(io::load_predictions(&out).unwrap().len(), 3);
    let (code, _) = egopose(&["predict", "--checkpoint", s(&data.join("val.jsonl")), "--data", s(&data), "--out", s(&out)]);
    assert_eq!(code, 2);
}
