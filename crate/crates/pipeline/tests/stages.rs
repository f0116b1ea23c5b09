mod common;

use common::small_config;
use hsfuse_core::container::{read_cube, write_cube};
use hsfuse_core::HsiCube;
use hsfuse_pipeline::config::{Residual, Source, UpsampleMethod};
use hsfuse_pipeline::provenance::StageRecord;
use hsfuse_pipeline::report::CSV_HEADER;
use hsfuse_pipeline::{Experiment, ExperimentConfig, Manifest, Outcome, PipelineError, RunOptions, Stage};

fn exp(cfg: ExperimentConfig) -> Experiment {
    Experiment::new(cfg, RunOptions::default()).unwrap()
}

#[test]
fn identity_pipeline_gives_ideal_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.upsample.method = UpsampleMethod::Reference;
    cfg.fuse.residual = Residual::Zero;
    let e = exp(cfg);
    e.toygen().unwrap();
    e.run(Stage::Prepare).unwrap();
    e.run(Stage::Upsample).unwrap();
    e.run(Stage::Fuse).unwrap();
    e.run(Stage::Evaluate).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("evaluate/report.csv")).unwrap();
    let mut rows = 0;
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let v: Vec<f64> = f[2..].iter().map(|s| s.parse().unwrap()).collect();
        assert_eq!(v[0], 1.0, "{line}");
        assert_eq!(v[1], 0.0, "{line}");
        assert_eq!(v[2], 0.0, "{line}");
        assert_eq!(v[4], 0.0, "{line}");
        assert!(v[3].is_infinite() && v[5].is_infinite(), "{line}");
        rows += 1;
    }
    // two test samples and a mean row, for each of the two sources
    assert_eq!(rows, 6);
}

#[test]
fn stages_are_idempotent_and_guard_their_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let e = exp(cfg.clone());
    e.toygen().unwrap();
    assert_eq!(e.run(Stage::Prepare).unwrap(), Outcome::Ran);
    assert_eq!(e.run(Stage::Prepare).unwrap(), Outcome::Skipped);
    assert_eq!(e.run(Stage::Upsample).unwrap(), Outcome::Ran);
    assert_eq!(e.run(Stage::Upsample).unwrap(), Outcome::Skipped);

    let changed = exp(cfg.with_overrides(&["dip.lambda=0.3"]).unwrap());
    assert!(matches!(changed.run(Stage::Upsample), Err(PipelineError::ConfigHashMismatch { .. })));
    let forced = Experiment::new(changed.config.clone(), RunOptions { force: true }).unwrap();
    assert_eq!(forced.run(Stage::Upsample).unwrap(), Outcome::Ran);

    assert_eq!(changed.run(Stage::Upsample).unwrap(), Outcome::Skipped);

    // tampering with an output makes the stage run again
    let x = dir.path().join("upsample/p000/x_dip/data.f32");
    let mut bytes = std::fs::read(&x).unwrap();
    bytes[0] ^= 1;
    std::fs::write(&x, bytes).unwrap();
    assert_eq!(changed.run(Stage::Upsample).unwrap(), Outcome::Ran);
    assert_eq!(changed.run(Stage::Upsample).unwrap(), Outcome::Skipped);
}

#[test]
fn provenance_records_reverify() {
    let dir = tempfile::tempdir().unwrap();
    let e = exp(small_config(dir.path()));
    e.toygen().unwrap();
    e.run_pipeline().unwrap();
    e.run(Stage::Sweep).unwrap();
    e.run(Stage::Report).unwrap();
    for stage in ["prepare", "upsample", "train", "fuse", "evaluate", "sweep", "report", "sweep/lambda_0.00"] {
        let rec = StageRecord::read(&dir.path().join(stage)).unwrap().unwrap_or_else(|| panic!("{stage} has no record"));
        assert!(!rec.outputs.is_empty(), "{stage}");
        rec.verify(dir.path()).unwrap();
        assert!(rec.finished_unix >= rec.started_unix);
        assert_eq!(rec.config_hash.len(), 64);
    }
    let rec = StageRecord::read(&dir.path().join("train")).unwrap().unwrap();
    assert_eq!(rec.seed, Some(0));
    assert!(rec.inputs.keys().any(|k| k.ends_with("x_dip/data.f32")));

    std::fs::write(dir.path().join("evaluate/report.csv"), "edited\n").unwrap();
    let rec = StageRecord::read(&dir.path().join("evaluate")).unwrap().unwrap();
    assert!(matches!(rec.verify(dir.path()), Err(PipelineError::Provenance { .. })));
}

#[test]
fn missing_upstream_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let e = exp(small_config(dir.path()));
    assert!(matches!(e.run(Stage::Prepare), Err(PipelineError::MissingUpstream { .. })));
    e.toygen().unwrap();
    assert!(matches!(e.run(Stage::Upsample), Err(PipelineError::MissingUpstream { .. })));
    e.run(Stage::Prepare).unwrap();
    assert!(matches!(e.run(Stage::Train), Err(PipelineError::MissingUpstream { .. })));
    assert!(matches!(e.run(Stage::Report), Err(PipelineError::MissingUpstream { .. })));
}

#[test]
fn empty_test_split_gives_empty_report() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.split.train_ratio = 1.0;
    cfg.upsample.method = UpsampleMethod::Bicubic;
    cfg.evaluate.sources = vec![Source::Upsampled];
    let e = exp(cfg);
    e.toygen().unwrap();
    e.run(Stage::Prepare).unwrap();
    e.run(Stage::Upsample).unwrap();
    assert_eq!(e.run(Stage::Evaluate).unwrap(), Outcome::Ran);
    let csv = std::fs::read_to_string(dir.path().join("evaluate/report.csv")).unwrap();
    assert_eq!(csv, format!("{CSV_HEADER}\n"));
}

#[test]
fn prepare_splits_a_large_scene_into_patches() {
    let dir = tempfile::tempdir().unwrap();
    let scene = HsiCube::from_fn((2, 960, 640), |(b, r, c)| ((b + r + c) % 17) as f32 / 16.0).unwrap();
    write_cube(&scene, &dir.path().join("scene"), "pavia-like").unwrap();
    let mut cfg = small_config(dir.path());
    cfg.dataset_name = "pavia-like".into();
    cfg.degrade.beta = 4;
    cfg.degrade.pan_band_count = 1;
    cfg.degrade.patch_size = Some(160);
    cfg.split.train_ratio = 17.0 / 24.0;
    let e = exp(cfg);
    e.run(Stage::Prepare).unwrap();
    let m: Manifest = serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m.samples.len(), 24);
    assert_eq!((m.train_ids.len(), m.test_ids.len()), (17, 7));
    assert_eq!(std::fs::read_dir(dir.path().join("samples")).unwrap().count(), 24);
    let (y, _) = read_cube(&dir.path().join("samples/p000/lr_hsi")).unwrap();
    assert_eq!(y.dim(), (2, 40, 40));
    assert_eq!(m.samples[0].dims, [2, 160, 160]);
}

#[test]
fn sweep_writes_one_row_per_lambda() {
    let dir = tempfile::tempdir().unwrap();
    let e = exp(small_config(dir.path()));
    e.toygen().unwrap();
    e.run(Stage::Prepare).unwrap();
    e.run(Stage::Sweep).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("sweep/report.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("0,2,"));
    assert!(lines[2].starts_with("0.8,2,"));
    assert!(dir.path().join("sweep/lambda_0.80/stage.json").exists());
}

#[test]
fn identical_configs_give_identical_reports() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut reports = Vec::new();
    for d in [&a, &b] {
        let e = exp(small_config(d.path()));
        e.toygen().unwrap();
        e.run_pipeline().unwrap();
        reports.push(std::fs::read(d.path().join("evaluate/report.csv")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn dip_upsample_writes_trace_and_response() {
    let dir = tempfile::tempdir().unwrap();
    let e = exp(small_config(dir.path()));
    e.toygen().unwrap();
    e.run(Stage::Prepare).unwrap();
    e.run(Stage::Upsample).unwrap();
    let out = dir.path().join("upsample/p000");
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.starts_with("iteration,spectral_term,spatial_term"));
    assert_eq!(trace.lines().count(), 9);
    let s: Vec<f64> = serde_json::from_str(&std::fs::read_to_string(out.join("srf.json")).unwrap()).unwrap();
    assert_eq!(s.len(), 4);
    assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    let (x, _) = read_cube(&out.join("x_dip")).unwrap();
    assert_eq!(x.dim(), (4, 16, 16));
}
