mod common;

use std::fs;

use common::cli::{full_pipeline, ok, vidsum};
use vidsum::dataset::load_dataset;
use vidsum::evaluator::{write_predictions, Predictions, VideoPrediction};

#[test]
fn synth_twice_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        ok(dir.path(), &["synth", "--videos", "5", "--seed", "1", "--out", out]);
    }
    let names = |d: &str| {
        let mut v: Vec<_> = fs::read_dir(dir.path().join(d)).unwrap().map(|e| e.unwrap().file_name()).collect();
        v.sort();
        v
    };
    assert_eq!(names("a"), names("b"));
    assert_eq!(names("a").len(), 1 + 1 + 5 * 3);
    for n in names("a") {
        assert_eq!(fs::read(dir.path().join("a").join(&n)).unwrap(), fs::read(dir.path().join("b").join(&n)).unwrap());
    }
}

#[test]
fn whole_pipeline_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (fa, fb) = (full_pipeline(a.path()), full_pipeline(b.path()));
    let names: Vec<_> = fa.iter().map(|(n, _)| n.as_str()).collect();
    for want in ["sup/checkpoint.bin", "sup/best.bin", "sup/history.csv", "mt/checkpoint.bin", "sup.csv", "eval.json", "ens.csv"] {
        assert!(names.contains(&want), "{want} missing from {names:?}");
    }
    assert_eq!(fa.len(), fb.len());
    for ((na, da), (nb, db)) in fa.iter().zip(&fb) {
        assert_eq!(na, nb);
        assert!(da == db, "{na} differs between runs");
    }
}

#[test]
fn perfect_submission_scores_one() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "--videos", "6", "--seed", "4", "--out", "data"]);
    let ds = load_dataset(dir.path().join("data/manifest.json")).unwrap();
    let preds = Predictions {
        videos: ds
            .records()
            .iter()
            .map(|r| VideoPrediction {
                video_id: r.video_id.clone(),
                scores: r.importance.to_f64_vec(),
            })
            .collect(),
    };
    write_predictions(&preds, dir.path().join("perfect.csv")).unwrap();
    let out = ok(dir.path(), &["eval", "--predictions", "perfect.csv", "--data", "data/manifest.json"]);
    let report: serde_json::Value = serde_json::from_slice(&out).unwrap();
    assert_eq!(report["mean"], 1.0);
    assert_eq!(report["n"], 6);
}

#[test]
fn gradcheck_seed_0_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["gradcheck", "--seed", "0"]);
    let text = String::from_utf8(out).unwrap();
    let last = text.lines().last().unwrap();
    assert!(last.starts_with("max relative error "), "{last}");
    let err: f64 = last.trim_start_matches("max relative error ").parse().unwrap();
    assert!(err <= 1e-4);
}

#[test]
fn bad_config_fails_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "--videos", "3", "--out", "data"]);
    fs::write(dir.path().join("cfg.json"), r#"{"alpha": 1.5}"#).unwrap();
    let out = vidsum(dir.path(), &["train", "--data", "data/manifest.json", "--out", "o", "--config", "cfg.json"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error: ") && err.contains("alpha"), "{err}");
    assert!(!dir.path().join("o").exists());

    let out = vidsum(dir.path(), &["train", "--data", "missing.json", "--out", "o"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(String::from_utf8(out.stderr).unwrap().lines().count(), 1);
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(vidsum(dir.path(), &["frobnicate"]).status.code(), Some(2));
}
