use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hsfuse_core::dip::{optimize_many, DipConfig};
use hsfuse_nn::par;
use hsfuse_pipeline::config::{Source, UpsampleMethod};
use hsfuse_pipeline::{Experiment, ExperimentConfig, RunOptions, Stage};

fn toy(root: &std::path::Path) -> Experiment {
    let mut c = ExperimentConfig::default();
    c.scene = root.join("scene");
    c.output_root = root.to_path_buf();
    c.upsample.method = UpsampleMethod::Bicubic;
    c.evaluate.sources = vec![Source::Upsampled];
    c.evaluate.emit_images = false;
    let exp = Experiment::new(c, RunOptions { force: true }).unwrap();
    exp.toygen().unwrap();
    exp
}

fn modes() -> [(&'static str, bool); 2] {
    [("parallel", false), ("sequential", true)]
}

fn stages(c: &mut Criterion) {
    let dir = tempfile::tempdir().unwrap();
    let exp = toy(dir.path());
    exp.run(Stage::Prepare).unwrap();
    exp.run(Stage::Upsample).unwrap();
    let mut group = c.benchmark_group("stage");
    group.sample_size(10);
    for (name, seq) in modes() {
        par::set_sequential(seq);
        for stage in [Stage::Prepare, Stage::Evaluate] {
            group.bench_with_input(BenchmarkId::new(stage.name(), name), &stage, |b, &s| b.iter(|| exp.run(s).unwrap()));
        }
    }
    par::set_sequential(false);
    group.finish();
}

fn dip_batch(c: &mut Criterion) {
    let dir = tempfile::tempdir().unwrap();
    let exp = toy(dir.path());
    exp.run(Stage::Prepare).unwrap();
    let m = exp.manifest().unwrap();
    let samples: Vec<_> = m.samples.iter().take(4).map(|s| exp.load_sample(&m, &s.id, false).unwrap()).collect();
    let cfg = DipConfig { iterations: 5, ..DipConfig::default() };
    let mut group = c.benchmark_group("dip");
    group.sample_size(10).measurement_time(Duration::from_secs(20));
    for (name, seq) in modes() {
        par::set_sequential(seq);
        group.bench_function(BenchmarkId::new("4 samples x 5 iterations", name), |b| b.iter(|| optimize_many(&samples, &cfg)));
    }
    par::set_sequential(false);
    group.finish();
}

criterion_group!(benches, stages, dip_batch);
criterion_main!(benches);
