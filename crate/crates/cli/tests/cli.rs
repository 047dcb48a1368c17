use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bgcmeta_cli::commands::predict_all;
use bgcmeta_cli::io::{forward_input_header, RrsTable};
use bgcmeta_cli::ModelFile;
use bgcmeta_core::bio_optics::{BgcState, ForwardModel, SiopSet};
use bgcmeta_core::spectral::{Spectrum, N_BANDS};

fn bgcmeta(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bgcmeta"))
        .args(args)
        .current_dir(dir)
        .env_remove("BGCMETA_CONFIG")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = bgcmeta(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn rrs_header() -> String {
    (400..=700).map(|nm| format!("rrs_{nm}")).collect::<Vec<_>>().join(",")
}

/// Library, small synthetic set and a two-epoch model in `dir`.
fn small_model(dir: &Path) -> PathBuf {
    ok(dir, &["fixture", "--records", "60", "-o", "lib"]);
    ok(dir, &["synth", "--library", "lib/library.csv", "--k", "300", "-o", "syn"]);
    ok(dir, &["pretrain", "--synthetic", "syn/synthetic.csv", "--epochs", "2", "--tasks", "4", "-o", "pre"]);
    dir.join("pre/model.json")
}

fn forward_row(id: &str, bgc: [f64; 5], siop: f64) -> String {
    let mut row = vec![id.to_string()];
    row.extend(bgc.iter().map(f64::to_string));
    row.extend(std::iter::repeat_n(siop.to_string(), 4 * N_BANDS));
    row.join(",")
}

#[test]
fn malformed_row_exits_with_input_code() {
    let dir = tempfile::tempdir().unwrap();
    let header = forward_input_header().join(",");
    let good = forward_row("a", [1.0, 2.0, 3.0, 20.0, 35.0], 0.01);
    let bad = forward_row("b", [1.0, 2.0, 3.0, 20.0, 35.0], 0.01).replacen(",2,", ",oops,", 1);
    fs::write(dir.path().join("in.csv"), format!("{header}\n{good}\n{bad}\n")).unwrap();
    let out = bgcmeta(dir.path(), &["simulate", "--input", "in.csv"]);
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("row 2"), "{msg}");
}

#[test]
fn missing_input_exits_with_input_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = bgcmeta(dir.path(), &["chroma", "--input", "nope.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_matches_library_forward_model() {
    let dir = tempfile::tempdir().unwrap();
    let header = forward_input_header().join(",");
    let rows = [forward_row("water", [1.0, 1.0, 1.0, 22.0, 35.0], 0.0), forward_row("x", [5.0, 2.0, 8.0, 15.0, 10.0], 0.02)];
    fs::write(dir.path().join("in.csv"), format!("{header}\n{}\n", rows.join("\n"))).unwrap();
    ok(dir.path(), &["simulate", "--input", "in.csv"]);

    let table = RrsTable::read(&dir.path().join("out/rrs.csv")).unwrap();
    assert_eq!(table.ids, ["water", "x"]);
    assert_eq!(fs::read_to_string(dir.path().join("out/rrs.csv")).unwrap().lines().next().unwrap().split(',').count(), N_BANDS + 1);
    let fwd = ForwardModel::bundled();
    let water = fwd.simulate(&BgcState::new(1.0, 1.0, 1.0, 22.0, 35.0).unwrap(), &SiopSet::zeros()).unwrap();
    for (a, b) in table.spectra[0].values().iter().zip(water.values()) {
        assert!((a - b).abs() <= 1e-15 * b.abs().max(1.0), "{a} vs {b}");
    }
    assert!(dir.path().join("out/manifest_simulate.json").exists());
}

#[test]
fn pipeline_smoke_with_resume_and_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let model_path = small_model(d);
    let synth_lines = fs::read_to_string(d.join("syn/synthetic.csv")).unwrap().lines().count();
    assert_eq!(synth_lines, 301);

    // Two epochs then one resumed epoch equals three straight epochs.
    ok(d, &["pretrain", "--synthetic", "syn/synthetic.csv", "--epochs", "1", "--tasks", "4", "-o", "one"]);
    ok(d, &["pretrain", "--synthetic", "syn/synthetic.csv", "--epochs", "2", "--tasks", "4", "--resume", "one/model.json", "-o", "resumed"]);
    let resumed: ModelFile = serde_json::from_slice(&fs::read(d.join("resumed/model.json")).unwrap()).unwrap();
    let straight: ModelFile = serde_json::from_slice(&fs::read(&model_path).unwrap()).unwrap();
    assert_eq!(resumed.params.theta, straight.params.theta);

    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(d.join("pre/manifest_pretrain.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "pretrain");
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 2);
    let log = fs::read_to_string(d.join("pre/training_log.csv")).unwrap();
    assert!(log.starts_with("epoch,meta_loss\n"));
}

#[test]
fn adapt_predict_evaluate_chroma() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_model(d);

    let syn = fs::read_to_string(d.join("syn/synthetic.csv")).unwrap();
    let mut lines = syn.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |n: &str| header.iter().position(|h| *h == n).unwrap();
    let rrs0 = col("rrs_400");
    let mut region = format!("timestamp,tss,doc,tchla,{}\n", rrs_header());
    let mut rrs = format!("id,{}\n", rrs_header());
    let mut meas = String::from("id,tss,doc,tchla\n");
    for (i, l) in lines.take(10).enumerate() {
        let f: Vec<&str> = l.split(',').collect();
        let conc = [f[col("tss")], f[col("doc")], f[col("tchla")]].join(",");
        let spec = f[rrs0..rrs0 + N_BANDS].join(",");
        region += &format!("t{i},{conc},{spec}\n");
        rrs += &format!("t{i},{spec}\n");
        meas += &format!("t{i},{conc}\n");
    }
    fs::write(d.join("region.csv"), region).unwrap();
    fs::write(d.join("rrs.csv"), &rrs).unwrap();
    fs::write(d.join("meas.csv"), &meas).unwrap();

    ok(d, &["adapt", "--region", "region.csv", "--model", "pre/model.json", "--folds", "10", "--iterations", "5", "-o", "ad"]);
    let metrics: serde_json::Value = serde_json::from_slice(&fs::read(d.join("ad/metrics.json")).unwrap()).unwrap();
    let m = metrics.as_array().unwrap();
    assert_eq!(m.len(), 3);
    for key in ["variable", "n", "r2", "bias", "rmse", "mae"] {
        assert!(m[0].get(key).is_some(), "missing {key}");
    }
    assert_eq!(fs::read_to_string(d.join("ad/cv_predictions.csv")).unwrap().lines().count(), 11);

    ok(d, &["predict", "--model", "ad/adapted_model.json", "--input", "rrs.csv", "-o", "pr"]);
    let model: ModelFile = serde_json::from_slice(&fs::read(d.join("ad/adapted_model.json")).unwrap()).unwrap();
    let table = RrsTable::read(&d.join("rrs.csv")).unwrap();
    let many: Vec<Spectrum> = table.spectra.iter().cycle().take(700).cloned().collect();
    let parallel = predict_all(&model.params, &many).unwrap();
    let serial: Vec<[f64; 3]> =
        model.params.forward_many(&many).unwrap().into_iter().map(|r| r.map(|v| 10f64.powf(v))).collect();
    assert_eq!(parallel, serial);
    for (p, s) in parallel.iter().zip(&many) {
        let single = model.params.predict(s).unwrap();
        assert!(p.iter().zip(&single).all(|(a, b)| (a - b).abs() <= 1e-12 * b.abs()));
    }

    ok(d, &["evaluate", "--pred", "meas.csv", "--meas", "meas.csv", "-o", "ev"]);
    let ev: serde_json::Value = serde_json::from_slice(&fs::read(d.join("ev/metrics.json")).unwrap()).unwrap();
    for row in ev.as_array().unwrap() {
        for key in ["bias", "rmse", "mae"] {
            assert!((row[key].as_f64().unwrap() - 1.0).abs() < 1e-12);
        }
    }

    ok(d, &["chroma", "--input", "rrs.csv", "--illuminant", "equal-energy", "-o", "ch"]);
    assert_eq!(fs::read_to_string(d.join("ch/chromaticity.csv")).unwrap().lines().count(), 11);

    let short: String = rrs.lines().map(|l| l.rsplit_once(',').unwrap().0.to_string() + "\n").collect();
    fs::write(d.join("short.csv"), short).unwrap();
    let out = bgcmeta(d, &["predict", "--model", "ad/adapted_model.json", "--input", "short.csv", "-o", "pr2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("cfg.json"), r#"{"paths": {"output_dir": "from_env"}}"#).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_bgcmeta"))
        .args(["fixture", "--records", "5"])
        .current_dir(d)
        .env("BGCMETA_CONFIG", d.join("cfg.json"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(d.join("from_env/library.csv").exists());

    fs::write(d.join("bad.json"), r#"{"pathz": {}}"#).unwrap();
    let out = bgcmeta(d, &["--config", "bad.json", "fixture"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn scaled_spectrum_has_same_chromaticity_through_cli() {
    let dir = tempfile::tempdir().unwrap();
    let s = Spectrum::from_fn(|nm| 0.001 + 1e-5 * (nm - 400.0));
    let t = RrsTable { ids: vec!["a".into(), "b".into()], spectra: vec![s.clone(), s.scale(3.0)] };
    t.write(&dir.path().join("in.csv")).unwrap();
    ok(dir.path(), &["chroma", "--input", "in.csv"]);
    let text = fs::read_to_string(dir.path().join("out/chromaticity.csv")).unwrap();
    let rows: Vec<Vec<f64>> =
        text.lines().skip(1).map(|l| l.split(',').skip(1).map(|v| v.parse().unwrap()).collect()).collect();
    assert!(rows[0].iter().zip(&rows[1]).all(|(a, b)| (a - b).abs() < 1e-12));
}
