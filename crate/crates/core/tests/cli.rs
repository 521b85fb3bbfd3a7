//! End-to-end checks of the `vjump` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY_TCN: [&str; 10] = [
    "--epochs", "2", "--stages", "2", "--layers", "3", "--filters", "6", "--lr", "0.01",
];

fn vjump(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vjump"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = vjump(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, subjects: &str, seed: &str) -> PathBuf {
    let d = dir.join("data");
    ok(&["synth", "--subjects", subjects, "--seed", seed, "--duration", "80", "--out", s(&d)]);
    d
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn synth_writes_sessions_heights_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    ok(&["synth", "--subjects", "3", "--seed", "7", "--out", s(&d)]);
    let mut sessions: Vec<String> = std::fs::read_dir(&d)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".csv") && n != "heights.csv")
        .collect();
    sessions.sort();
    assert_eq!(sessions, ["S01.csv", "S02.csv", "S03.csv"]);
    assert!(d.join("heights.csv").is_file());
    let manifest = json(&d.join("manifest.json"));
    assert_eq!(manifest["command"], "synth");
    assert_eq!(manifest["settings"]["synth"]["seed"], 7);
    assert_eq!(manifest["settings"]["synth"]["num_subjects"], 3);
}

#[test]
fn pipeline_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let d = synth(tmp.path(), "2", "7");
    let mut reports = Vec::new();
    for run in ["r1", "r2"] {
        let r = tmp.path().join(run);
        let mut args = vec!["pipeline", "--data", s(&d), "--seed", "7", "--out", s(&r)];
        args.extend(TINY_TCN);
        ok(&args);
        reports.push(std::fs::read(r.join("report.json")).unwrap());
        assert!(r.join("bland_altman.csv").is_file());
        assert!(r.join("manifest.json").is_file());
    }
    assert_eq!(reports[0], reports[1]);
    let report: serde_json::Value = serde_json::from_slice(&reports[0]).unwrap();
    for key in ["seg_metrics", "count_loa", "reg_metrics", "bland_altman_points", "config_echo"] {
        assert!(report.get(key).is_some(), "missing {key}");
    }
    assert_eq!(report["config_echo"]["tcn_seed"], 7);
}

#[test]
fn five_channel_session_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let d = synth(tmp.path(), "1", "3");
    let m = tmp.path().join("m");
    let mut args = vec!["train", "--data", s(&d), "--out", s(&m)];
    args.extend(TINY_TCN);
    ok(&args);
    let bad = tmp.path().join("five.csv");
    std::fs::write(&bad, "t,ax,ay,az,gx,gy\n0,0,1,0,0,0\n0.01,0,1,0,0,0\n").unwrap();
    let model = m.join("model.ckpt");
    let out = vjump(&["predict", "--model", s(&model), "--session", s(&bad), "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("channel mismatch"));
}

#[test]
fn usage_and_io_errors() {
    let out = vjump(&["synth", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));

    let out = vjump(&["eval-reg", "--model", "/nonexistent/r.ckpt", "--features", "/nonexistent/f.csv"]);
    assert_eq!(out.status.code(), Some(2));

    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    std::fs::write(&cfg, "roi_width = \"wide\"\n").unwrap();
    let out = vjump(&["synth", "--config", s(&cfg), "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn loading_a_segmenter_as_regressor_fails_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let d = synth(tmp.path(), "1", "5");
    let m = tmp.path().join("m");
    let mut args = vec!["train", "--data", s(&d), "--out", s(&m)];
    args.extend(TINY_TCN);
    ok(&args);
    let f = tmp.path().join("f");
    ok(&["extract-features", "--data", s(&d), "--out", s(&f)]);
    let model = m.join("model.ckpt");
    let features = f.join("features.csv");
    let out = vjump(&["eval-reg", "--model", s(&model), "--features", s(&features), "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("\"tcn\""));
}

/// Running train → predict → eval-seg → extract-features → fit-reg →
/// eval-reg per fold reproduces the pipeline report.
#[test]
fn pipeline_equals_manual_steps() {
    // big enough that the segmenter finds jumps, so heights are compared too
    const TCN: [&str; 10] = [
        "--epochs", "20", "--stages", "2", "--layers", "7", "--filters", "12", "--lr", "0.01",
    ];
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("data");
    ok(&["synth", "--subjects", "3", "--seed", "11", "--out", s(&d)]);
    let r = tmp.path().join("report");
    let mut args = vec!["pipeline", "--data", s(&d), "--seed", "3", "--regressor", "gbt", "--out", s(&r)];
    args.extend(TCN);
    ok(&args);
    let report = json(&r.join("report.json"));
    assert!(!report["jumps"].as_array().unwrap().is_empty());

    let pred_dir = tmp.path().join("pred");
    let mut manual_jumps = Vec::new();
    let ids = ["S01", "S02", "S03"];
    for test in ids {
        let fold = tmp.path().join(format!("fold_{test}"));
        let train_dir = fold.join("train");
        let test_dir = fold.join("test");
        for dir in [&train_dir, &test_dir] {
            std::fs::create_dir_all(dir).unwrap();
            std::fs::copy(d.join("heights.csv"), dir.join("heights.csv")).unwrap();
        }
        for id in ids {
            let dir = if id == test { &test_dir } else { &train_dir };
            std::fs::copy(d.join(format!("{id}.csv")), dir.join(format!("{id}.csv"))).unwrap();
        }
        let model_dir = fold.join("model");
        let mut args = vec!["train", "--data", s(&train_dir), "--seed", "3", "--out", s(&model_dir)];
        args.extend(TCN);
        ok(&args);
        let model = model_dir.join("model.ckpt");
        let session = test_dir.join(format!("{test}.csv"));
        ok(&["predict", "--model", s(&model), "--session", s(&session), "--out", s(&pred_dir)]);

        let train_features = fold.join("train_features");
        ok(&["extract-features", "--data", s(&train_dir), "--out", s(&train_features)]);
        let reg_dir = fold.join("reg");
        let tf = train_features.join("features.csv");
        ok(&["fit-reg", "--features", s(&tf), "--regressor", "gbt", "--seed", "3", "--out", s(&reg_dir)]);
        let test_features = fold.join("test_features");
        ok(&["extract-features", "--data", s(&test_dir), "--segments", s(&pred_dir), "--out", s(&test_features)]);
        let eval_dir = fold.join("eval");
        let reg = reg_dir.join("regressor.ckpt");
        let tf = test_features.join("features.csv");
        // fewer than two matched jumps leaves no metrics, but predictions are still written
        vjump(&["eval-reg", "--model", s(&reg), "--features", s(&tf), "--out", s(&eval_dir)]);
        if eval_dir.join("predictions.csv").is_file() {
            let text = std::fs::read_to_string(eval_dir.join("predictions.csv")).unwrap();
            manual_jumps.extend(text.lines().skip(1).map(|l| l.to_string()));
        }
    }
    let seg_dir = tmp.path().join("seg");
    ok(&["eval-seg", "--pred", s(&pred_dir), "--data", s(&d), "--out", s(&seg_dir)]);
    let seg = json(&seg_dir.join("seg_metrics.json"));
    assert_eq!(seg["seg_metrics"], report["seg_metrics"]);
    assert_eq!(seg["count_loa"], report["count_loa"]);

    let mut from_report: Vec<String> = report["jumps"]
        .as_array()
        .unwrap()
        .iter()
        .map(|j| {
            format!(
                "{},{},{},{}",
                j["subject_id"].as_str().unwrap(),
                j["pred"]["start"],
                j["pred"]["end"],
                j["predicted_height_m"].as_f64().unwrap()
            )
        })
        .collect();
    let mut manual: Vec<String> = manual_jumps
        .iter()
        .map(|l| {
            let c: Vec<&str> = l.split(',').collect();
            let p: f64 = c[5].parse().unwrap();
            format!("{},{},{},{}", c[0], c[1], c[2], p)
        })
        .collect();
    // predictions.csv rounds to 9 significant digits
    let round = |v: &mut Vec<String>| {
        for line in v.iter_mut() {
            let (head, tail) = line.rsplit_once(',').unwrap();
            let p: f64 = tail.parse().unwrap();
            *line = format!("{head},{:.8e}", p);
        }
        v.sort();
    };
    round(&mut from_report);
    round(&mut manual);
    assert_eq!(from_report, manual);
}

#[test]
fn importance_ranks_every_feature() {
    let tmp = tempfile::tempdir().unwrap();
    let d = synth(tmp.path(), "2", "13");
    let f = tmp.path().join("f");
    ok(&["extract-features", "--data", s(&d), "--out", s(&f)]);
    let features = f.join("features.csv");
    let reg = tmp.path().join("reg");
    ok(&["fit-reg", "--features", s(&features), "--regressor", "rf", "--out", s(&reg)]);
    let model = reg.join("regressor.ckpt");
    let imp = tmp.path().join("imp");
    let args = ["importance", "--model", s(&model), "--features", s(&features), "--repeats", "2", "--seed", "1"];
    ok(&[&args[..], &["--out", s(&imp)]].concat());
    let text = std::fs::read_to_string(imp.join("importance.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("rank,feature,importance"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 145);
    let values: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(values.windows(2).all(|w| w[0] >= w[1]), "not sorted by importance");
    assert!(values.iter().all(|v| v.is_finite()));
    // the vertical-axis peak carries height in the synthetic data
    let top: Vec<&str> = rows[..10].iter().map(|r| r[1]).collect();
    assert!(top.iter().any(|n| n.starts_with("ay_")), "top features {top:?}");
    let again = tmp.path().join("imp2");
    ok(&[&args[..], &["--out", s(&again)]].concat());
    assert_eq!(text, std::fs::read_to_string(again.join("importance.csv")).unwrap());
}
