//! The staged experiment: prepare -> upsample -> train -> fuse -> evaluate,
//! plus the lambda sweep and the summary report.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use hsfuse_core::container::{read_cube, read_pan, write_cube, write_pan};
use hsfuse_core::degrade::{make_sample, normalize_by_max, partition_patches};
use hsfuse_core::dip::{optimize_many, TraceRow};
use hsfuse_core::hyperkite::{fuse, train_with, HyperKite, TrainSample};
use hsfuse_core::metrics::{evaluate as score, MetricReport};
use hsfuse_core::resample::baseline_upsample;
use hsfuse_core::srf::{excite, squeeze};
use hsfuse_core::{validate_sample, FusionSample, HsiCube};
use hsfuse_nn::par;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::artifacts::{default_rgb_bands, emit_error_map, emit_rgb};
use crate::config::{canonical_hash, ExperimentConfig, Residual, Source, Subset, UpsampleMethod};
use crate::error::{PipelineError, Result};
use crate::provenance::{decide, digest_paths, now_unix, Decision, StageRecord};
use crate::report::{mean_row, read_json, render_csv, render_sweep_csv, write_json, write_text, Row};
use crate::toy::toy_scene;

pub const MANIFEST: &str = "manifest.json";
pub const CHECKPOINT: &str = "hyperkite.ckpt";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Prepare,
    Upsample,
    Train,
    Fuse,
    Evaluate,
    Sweep,
    Report,
}

impl Stage {
    pub const PIPELINE: [Stage; 5] = [Stage::Prepare, Stage::Upsample, Stage::Train, Stage::Fuse, Stage::Evaluate];

    pub fn name(self) -> &'static str {
        match self {
            Self::Prepare => "prepare",
            Self::Upsample => "upsample",
            Self::Train => "train",
            Self::Fuse => "fuse",
            Self::Evaluate => "evaluate",
            Self::Sweep => "sweep",
            Self::Report => "report",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Ran,
    Skipped,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    /// Overwrite results recorded under a different config.
    pub force: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub id: String,
    pub split: Split,
    /// `[bands, height, width]` of the reference.
    pub dims: [usize; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub dataset_name: String,
    pub beta: usize,
    pub pan_band_count: usize,
    /// Scene maximum divided out at ingestion (1 when not normalized).
    pub scale: f32,
    pub split_seed: u64,
    pub samples: Vec<SampleEntry>,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

impl Manifest {
    pub fn ids(&self, subset: Subset) -> Vec<String> {
        match subset {
            Subset::All => self.samples.iter().map(|s| s.id.clone()).collect(),
            Subset::Train => self.train_ids.clone(),
            Subset::Test => self.test_ids.clone(),
        }
    }
}

/// Paths below the output root.
#[derive(Clone, Debug)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join(MANIFEST)
    }

    pub fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.root.join(stage.name())
    }

    pub fn sample(&self, id: &str) -> PathBuf {
        self.root.join("samples").join(id)
    }

    pub fn x_dip(&self, upsample_dir: &Path, id: &str) -> PathBuf {
        upsample_dir.join(id).join("x_dip")
    }

    pub fn fused(&self, id: &str) -> PathBuf {
        self.stage_dir(Stage::Fuse).join(id).join("fused")
    }

    pub fn checkpoint(&self) -> PathBuf {
        self.stage_dir(Stage::Train).join(CHECKPOINT)
    }

    pub fn sweep_dir(&self, lambda: f64) -> PathBuf {
        self.stage_dir(Stage::Sweep).join(format!("lambda_{lambda:.2}"))
    }

    /// Relative to the root when inside it, absolute otherwise.
    pub fn rel(&self, p: &Path) -> PathBuf {
        match p.strip_prefix(&self.root) {
            Ok(r) => r.to_path_buf(),
            Err(_) => p.canonicalize().unwrap_or_else(|_| p.to_path_buf()),
        }
    }
}

fn mkdir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| PipelineError::io(p, e))
}

fn remove(p: &Path) -> Result<()> {
    if p.is_dir() {
        std::fs::remove_dir_all(p).map_err(|e| PipelineError::io(p, e))
    } else if p.exists() {
        std::fs::remove_file(p).map_err(|e| PipelineError::io(p, e))
    } else {
        Ok(())
    }
}

fn require(stage: Stage, p: &Path) -> Result<()> {
    if p.exists() {
        Ok(())
    } else {
        Err(PipelineError::MissingUpstream { stage: stage.name().into(), path: p.to_path_buf() })
    }
}

/// One idempotent unit of work with a `stage.json` in `dir`.
struct Job<'a> {
    stage: Stage,
    name: String,
    dir: PathBuf,
    config: Value,
    seed: Option<u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    layout: &'a Layout,
}

impl Job<'_> {
    fn run(self, opts: RunOptions, body: impl FnOnce() -> Result<()>) -> Result<Outcome> {
        for p in &self.inputs {
            require(self.stage, p)?;
        }
        let root = &self.layout.root;
        let rel_inputs: Vec<PathBuf> = self.inputs.iter().map(|p| self.layout.rel(p)).collect();
        let inputs = digest_paths(root, &rel_inputs)?;
        let hash = canonical_hash(&self.config);
        if decide(&self.name, &self.dir, root, &hash, &inputs, opts.force)? == Decision::Skip {
            log::info!("{}: up to date", self.name);
            return Ok(Outcome::Skipped);
        }
        for p in &self.outputs {
            remove(p)?;
        }
        remove(&StageRecord::path(&self.dir))?;
        let started = now_unix();
        body()?;
        let rel_outputs: Vec<PathBuf> = self.outputs.iter().map(|p| self.layout.rel(p)).collect();
        let record = StageRecord {
            stage: self.name.clone(),
            config_hash: hash,
            seed: self.seed,
            started_unix: started,
            finished_unix: now_unix(),
            inputs,
            outputs: digest_paths(root, &rel_outputs)?,
        };
        record.write(&self.dir)?;
        log::info!("{}: done in {:.1}s", self.name, record.finished_unix - started);
        Ok(Outcome::Ran)
    }
}

/// Handle for running stages of one experiment.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub layout: Layout,
    pub options: RunOptions,
}

impl Experiment {
    pub fn new(config: ExperimentConfig, options: RunOptions) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(config.output_root.clone());
        Ok(Self { config, layout, options })
    }

    pub fn run(&self, stage: Stage) -> Result<Outcome> {
        log::info!("stage {}", stage.name());
        match stage {
            Stage::Prepare => self.prepare(),
            Stage::Upsample => self.upsample(),
            Stage::Train => self.train(),
            Stage::Fuse => self.fuse(),
            Stage::Evaluate => self.evaluate(),
            Stage::Sweep => self.sweep(),
            Stage::Report => self.report(),
        }
    }

    pub fn run_pipeline(&self) -> Result<()> {
        for s in Stage::PIPELINE {
            self.run(s)?;
        }
        Ok(())
    }

    pub fn manifest(&self) -> Result<Manifest> {
        let p = self.layout.manifest();
        require(Stage::Upsample, &p)?;
        read_json(&p)
    }

    /// Write the synthetic scene to `config.scene`.
    pub fn toygen(&self) -> Result<PathBuf> {
        let scene = toy_scene(&self.config.toy)?;
        let dir = self.config.scene.clone();
        write_cube(&scene, &dir, &self.config.dataset_name)?;
        log::info!("toygen: {:?} scene written to {}", scene.dim(), dir.display());
        Ok(dir)
    }

    fn job(&self, stage: Stage, dir: PathBuf, config: Value) -> Job<'_> {
        Job { stage, name: stage.name().into(), dir, config, seed: None, inputs: vec![], outputs: vec![], layout: &self.layout }
    }

    pub fn prepare(&self) -> Result<Outcome> {
        let c = &self.config;
        let l = &self.layout;
        let mut job = self.job(
            Stage::Prepare,
            l.stage_dir(Stage::Prepare),
            json!({ "dataset_name": c.dataset_name, "degrade": c.degrade, "split": c.split }),
        );
        job.seed = Some(c.split.seed);
        job.inputs = vec![c.scene.clone()];
        job.outputs = vec![l.root.join("samples"), l.manifest()];
        job.run(self.options, || self.prepare_body())
    }

    fn prepare_body(&self) -> Result<()> {
        let c = &self.config;
        let (scene, _) = read_cube(&c.scene)?;
        let (scene, scale) = if c.degrade.normalize { normalize_by_max(&scene)? } else { (scene, 1.0) };
        let patches = match c.degrade.patch_size {
            Some(p) => partition_patches(&scene, p)?,
            None => vec![scene],
        };
        let ids: Vec<String> = (0..patches.len()).map(|i| format!("p{i:03}")).collect();
        let spec = c.degrade.spec();
        let jobs: Vec<(&String, &HsiCube)> = ids.iter().zip(&patches).collect();
        let written = par::map_slice(&jobs, |(id, patch)| -> Result<[usize; 3]> {
            let s = make_sample(patch, &spec, id, &c.dataset_name)?;
            let dir = self.layout.sample(id);
            write_cube(s.reference.as_ref().expect("reference"), &dir.join("reference"), &c.dataset_name)?;
            write_cube(&s.lr_hsi, &dir.join("lr_hsi"), &c.dataset_name)?;
            write_pan(&s.pan, &dir.join("pan"), &c.dataset_name)?;
            let (b, h, w) = patch.dim();
            Ok([b, h, w])
        });
        let dims: Vec<[usize; 3]> = written.into_iter().collect::<Result<_>>()?;
        let (train_ids, test_ids) = split_ids(&ids, c)?;
        let samples = ids
            .iter()
            .zip(dims)
            .map(|(id, d)| SampleEntry {
                id: id.clone(),
                split: if train_ids.contains(id) { Split::Train } else { Split::Test },
                dims: d,
            })
            .collect();
        let manifest = Manifest {
            dataset_name: c.dataset_name.clone(),
            beta: c.degrade.beta,
            pan_band_count: c.degrade.pan_band_count,
            scale,
            split_seed: c.split.seed,
            samples,
            train_ids,
            test_ids,
        };
        write_json(&self.layout.manifest(), &manifest)?;
        log::info!("prepare: {} samples ({} train / {} test)", ids.len(), manifest.train_ids.len(), manifest.test_ids.len());
        Ok(())
    }

    pub fn load_sample(&self, m: &Manifest, id: &str, with_reference: bool) -> Result<FusionSample> {
        let dir = self.layout.sample(id);
        require(Stage::Upsample, &dir)?;
        let sample = FusionSample {
            lr_hsi: read_cube(&dir.join("lr_hsi"))?.0,
            pan: read_pan(&dir.join("pan"))?,
            reference: if with_reference { Some(read_cube(&dir.join("reference"))?.0) } else { None },
            beta: m.beta,
            patch_id: id.into(),
            dataset_name: m.dataset_name.clone(),
        };
        validate_sample(&sample)?;
        Ok(sample)
    }

    fn upsample_config(&self, method: UpsampleMethod, lambda: f64, subset: Subset) -> Value {
        let mut v = json!({ "method": method, "subset": subset });
        if method.is_dip() {
            v["dip"] = serde_json::to_value(self.config.dip_for(method, lambda)).expect("json");
        }
        v
    }

    pub fn upsample(&self) -> Result<Outcome> {
        let c = &self.config;
        let m = self.manifest()?;
        let ids = m.ids(c.upsample.subset);
        let dir = self.layout.stage_dir(Stage::Upsample);
        self.upsample_into(&m, &ids, c.upsample.method, c.dip.lambda, c.upsample.subset, dir, "upsample".into())
    }

    #[allow(clippy::too_many_arguments)]
    fn upsample_into(
        &self,
        m: &Manifest,
        ids: &[String],
        method: UpsampleMethod,
        lambda: f64,
        subset: Subset,
        dir: PathBuf,
        name: String,
    ) -> Result<Outcome> {
        let mut job = self.job(Stage::Upsample, dir.clone(), self.upsample_config(method, lambda, subset));
        job.name = name;
        job.seed = method.is_dip().then_some(self.config.dip.seed);
        job.inputs = vec![self.layout.manifest()];
        for id in ids {
            let s = self.layout.sample(id);
            job.inputs.push(s.join("lr_hsi"));
            job.inputs.push(s.join("pan"));
            if method == UpsampleMethod::Reference {
                job.inputs.push(s.join("reference"));
            }
        }
        job.outputs = vec![dir.clone()];
        job.run(self.options, || {
            mkdir(&dir)?;
            let samples: Vec<FusionSample> =
                ids.iter().map(|id| self.load_sample(m, id, method == UpsampleMethod::Reference)).collect::<Result<_>>()?;
            if method.is_dip() {
                let dip = self.config.dip_for(method, lambda);
                for (s, r) in samples.iter().zip(optimize_many(&samples, &dip)) {
                    let (x, state) = r?;
                    let out = dir.join(&s.patch_id);
                    write_cube(&x, &out.join("x_dip"), &m.dataset_name)?;
                    write_text(&out.join("trace.csv"), &trace_csv(&state.energy_trace))?;
                    let s_hat = excite(&squeeze(&x), &state.srf_params())?;
                    write_json(&out.join("srf.json"), &s_hat)?;
                    write_json(&out.join("srf_params.json"), &state.srf_params())?;
                    log::info!("{}: spectral {:.5} spatial {:.5}", s.patch_id, state.final_energy.spectral, state.final_energy.spatial);
                }
            } else {
                for s in &samples {
                    let x = match method.baseline() {
                        Some(b) => baseline_upsample(&s.lr_hsi, s.beta, b)?,
                        None => s.reference.clone().expect("reference loaded"),
                    };
                    write_cube(&x, &dir.join(&s.patch_id).join("x_dip"), &m.dataset_name)?;
                }
            }
            Ok(())
        })
    }

    pub fn train(&self) -> Result<Outcome> {
        let c = &self.config;
        let m = self.manifest()?;
        let up = self.layout.stage_dir(Stage::Upsample);
        let dir = self.layout.stage_dir(Stage::Train);
        let mut job = self.job(Stage::Train, dir.clone(), json!({ "hyperkite": c.hyperkite }));
        job.seed = Some(c.hyperkite.seed);
        job.inputs = vec![self.layout.manifest()];
        for id in &m.train_ids {
            job.inputs.push(self.layout.x_dip(&up, id));
            job.inputs.push(self.layout.sample(id).join("pan"));
            job.inputs.push(self.layout.sample(id).join("reference"));
        }
        job.outputs = vec![dir.clone()];
        job.run(self.options, || {
            if m.train_ids.is_empty() {
                return Err(PipelineError::config("the split has no training samples"));
            }
            let samples: Vec<TrainSample> = m
                .train_ids
                .iter()
                .map(|id| {
                    let s = self.layout.sample(id);
                    Ok(TrainSample {
                        x_dip: read_cube(&self.layout.x_dip(&up, id))?.0,
                        pan: read_pan(&s.join("pan"))?,
                        reference: read_cube(&s.join("reference"))?.0,
                    })
                })
                .collect::<Result<_>>()?;
            let bands = samples[0].x_dip.bands();
            let mut model = HyperKite::<f32>::new(&c.hyperkite, bands)?;
            let epochs = c.hyperkite.epochs;
            let report = train_with(&mut model, &samples, |e, loss| {
                if e == 0 || (e + 1) % 10 == 0 || e + 1 == epochs {
                    log::info!("train: epoch {}/{epochs} loss {loss:.6}", e + 1);
                }
            })?;
            mkdir(&dir)?;
            let mut csv = String::from("epoch,loss\n");
            for (e, l) in report.loss_history.iter().enumerate() {
                csv.push_str(&format!("{e},{l}\n"));
            }
            write_text(&dir.join("loss.csv"), &csv)?;
            model.save(&dir.join(CHECKPOINT), json!({ "train_ids": m.train_ids, "loss_history": report.loss_history }))?;
            Ok(())
        })
    }

    pub fn fuse(&self) -> Result<Outcome> {
        let c = &self.config;
        let m = self.manifest()?;
        let up = self.layout.stage_dir(Stage::Upsample);
        let dir = self.layout.stage_dir(Stage::Fuse);
        let mut job = self.job(Stage::Fuse, dir.clone(), json!({ "residual": c.fuse.residual, "tile": c.hyperkite.tile }));
        job.inputs = vec![self.layout.manifest()];
        if c.fuse.residual == Residual::Hyperkite {
            job.inputs.push(self.layout.checkpoint());
        }
        for id in &m.test_ids {
            job.inputs.push(self.layout.x_dip(&up, id));
            job.inputs.push(self.layout.sample(id).join("pan"));
        }
        job.outputs = vec![dir.clone()];
        job.run(self.options, || {
            mkdir(&dir)?;
            let model = match c.fuse.residual {
                Residual::Hyperkite => {
                    let (mut model, header) = HyperKite::<f32>::load(&self.layout.checkpoint())?;
                    model.config.tile = c.hyperkite.tile;
                    log::info!("fuse: checkpoint seed {}", header.seed);
                    Some(model)
                }
                Residual::Zero => None,
            };
            let fused = par::map_slice(&m.test_ids, |id| -> Result<()> {
                let x_dip = read_cube(&self.layout.x_dip(&up, id))?.0;
                let x_res = match &model {
                    Some(net) => net.infer(&x_dip, &read_pan(&self.layout.sample(id).join("pan"))?)?,
                    None => HsiCube::filled(x_dip.dim(), 0.0)?,
                };
                write_cube(&fuse(&x_dip, &x_res)?, &self.layout.fused(id), &m.dataset_name)?;
                Ok(())
            });
            fused.into_iter().collect::<Result<Vec<()>>>()?;
            Ok(())
        })
    }

    fn method_name(&self, source: Source) -> String {
        let up = self.config.upsample.method.name();
        match (source, self.config.fuse.residual) {
            (Source::Upsampled, _) => up.to_string(),
            (Source::Fused, Residual::Hyperkite) => format!("{up}+hyperkite"),
            (Source::Fused, Residual::Zero) => format!("{up}+zero-residual"),
        }
    }

    fn source_path(&self, source: Source, id: &str) -> PathBuf {
        match source {
            Source::Upsampled => self.layout.x_dip(&self.layout.stage_dir(Stage::Upsample), id),
            Source::Fused => self.layout.fused(id),
        }
    }

    pub fn evaluate(&self) -> Result<Outcome> {
        let c = &self.config;
        let m = self.manifest()?;
        let dir = self.layout.stage_dir(Stage::Evaluate);
        let mut job = self.job(Stage::Evaluate, dir.clone(), json!({ "evaluate": c.evaluate, "rgb_bands": c.rgb_bands }));
        job.inputs = vec![self.layout.manifest()];
        for id in &m.test_ids {
            job.inputs.push(self.layout.sample(id).join("reference"));
            for s in &c.evaluate.sources {
                job.inputs.push(self.source_path(*s, id));
            }
        }
        job.outputs = vec![dir.clone()];
        job.run(self.options, || {
            mkdir(&dir)?;
            if m.test_ids.is_empty() {
                log::warn!("evaluate: no test samples; writing an empty report");
            }
            let mut groups = Vec::new();
            let mut detail = Vec::new();
            for source in &c.evaluate.sources {
                let method = self.method_name(*source);
                let scored = par::map_slice(&m.test_ids, |id| -> Result<(Row, MetricReport)> {
                    let x = read_cube(&self.source_path(*source, id))?.0;
                    let reference = read_cube(&self.layout.sample(id).join("reference"))?.0;
                    let r = score(&x, &reference, m.beta, c.evaluate.ergas_form)?;
                    if c.evaluate.emit_images {
                        let img = dir.join("images");
                        let tag = match source {
                            Source::Upsampled => "upsampled",
                            Source::Fused => "fused",
                        };
                        let bands = c.rgb_bands.unwrap_or_else(|| default_rgb_bands(x.bands()));
                        emit_error_map(&x, &reference, &img.join(format!("{id}_{tag}_error")))?;
                        emit_rgb(&x, bands, &img.join(format!("{id}_{tag}_rgb")))?;
                        emit_rgb(&reference, bands, &img.join(format!("{id}_reference_rgb")))?;
                    }
                    Ok((Row::from_report(&method, id, &r), r))
                });
                let scored: Vec<(Row, MetricReport)> = scored.into_iter().collect::<Result<_>>()?;
                let rows: Vec<Row> = scored.iter().map(|(r, _)| r.clone()).collect();
                detail.push(json!({
                    "method": method,
                    "source": source,
                    "mean": mean_row(&method, &rows),
                    "samples": scored.iter().map(|(r, full)| json!({ "id": r.sample, "metrics": full })).collect::<Vec<_>>(),
                }));
                groups.push((method, rows));
            }
            write_text(&dir.join("report.csv"), &render_csv(&groups))?;
            write_json(
                &dir.join("report.json"),
                &json!({ "dataset_name": m.dataset_name, "beta": m.beta, "ergas_form": c.evaluate.ergas_form, "methods": detail }),
            )?;
            Ok(())
        })
    }

    /// Upsample stage results usable for `lambda`, if they already exist.
    fn reusable_upsample(&self, lambda: f64, ids: &[String]) -> Result<Option<PathBuf>> {
        let c = &self.config;
        if c.upsample.method != UpsampleMethod::DipQss {
            return Ok(None);
        }
        let dir = self.layout.stage_dir(Stage::Upsample);
        let Some(rec) = StageRecord::read(&dir)? else { return Ok(None) };
        let want = canonical_hash(&self.upsample_config(UpsampleMethod::DipQss, lambda, c.upsample.subset));
        if rec.config_hash != want || rec.verify(&self.layout.root).is_err() {
            return Ok(None);
        }
        Ok(ids.iter().all(|id| self.layout.x_dip(&dir, id).exists()).then_some(dir))
    }

    pub fn sweep(&self) -> Result<Outcome> {
        let c = &self.config;
        let m = self.manifest()?;
        let ids = m.test_ids.clone();
        let mut sources = Vec::new();
        for &lambda in &c.lambda_sweep {
            let dir = match self.reusable_upsample(lambda, &ids)? {
                Some(d) => {
                    log::info!("sweep: lambda {lambda} reuses the upsample stage");
                    d
                }
                None => {
                    let d = self.layout.sweep_dir(lambda);
                    self.upsample_into(&m, &ids, UpsampleMethod::DipQss, lambda, Subset::Test, d.clone(), format!("sweep lambda={lambda}"))?;
                    d
                }
            };
            sources.push((lambda, dir));
        }

        let dir = self.layout.stage_dir(Stage::Sweep);
        let mut job = self.job(
            Stage::Sweep,
            dir.clone(),
            json!({ "lambda_sweep": c.lambda_sweep, "ergas_form": c.evaluate.ergas_form }),
        );
        job.inputs = vec![self.layout.manifest()];
        for (_, d) in &sources {
            for id in &ids {
                job.inputs.push(self.layout.x_dip(d, id));
            }
        }
        let (csv_path, json_path) = (dir.join("report.csv"), dir.join("report.json"));
        job.outputs = vec![csv_path.clone(), json_path.clone()];
        job.run(self.options, || {
            let mut table = Vec::new();
            let mut detail = Vec::new();
            for (lambda, d) in &sources {
                let method = format!("dip-qss lambda={lambda}");
                let rows = par::map_slice(&ids, |id| -> Result<Row> {
                    let x = read_cube(&self.layout.x_dip(d, id))?.0;
                    let reference = read_cube(&self.layout.sample(id).join("reference"))?.0;
                    Ok(Row::from_report(&method, id, &score(&x, &reference, m.beta, c.evaluate.ergas_form)?))
                });
                let rows: Vec<Row> = rows.into_iter().collect::<Result<_>>()?;
                let mean = mean_row(&method, &rows);
                detail.push(json!({ "lambda": lambda, "mean": mean, "samples": rows }));
                table.push((*lambda, rows.len(), mean));
            }
            if ids.is_empty() {
                log::warn!("sweep: no test samples");
            }
            write_text(&csv_path, &render_sweep_csv(&table))?;
            write_json(&json_path, &json!({ "dataset_name": m.dataset_name, "rows": detail }))?;
            Ok(())
        })
    }

    pub fn report(&self) -> Result<Outcome> {
        let l = &self.layout;
        let eval = l.stage_dir(Stage::Evaluate).join("report.csv");
        let sweep = l.stage_dir(Stage::Sweep).join("report.csv");
        let train = l.stage_dir(Stage::Train).join("loss.csv");
        let present: Vec<PathBuf> = [&eval, &sweep, &train].into_iter().filter(|p| p.exists()).cloned().collect();
        if present.is_empty() {
            return Err(PipelineError::MissingUpstream { stage: "report".into(), path: eval });
        }
        let dir = l.stage_dir(Stage::Report);
        let mut job = self.job(Stage::Report, dir.clone(), json!({ "rgb_bands": self.config.rgb_bands }));
        job.inputs = present;
        job.outputs = vec![dir.join("summary.md")];
        job.run(self.options, || {
            let mut md = format!("# {}\n\n", self.config.dataset_name);
            if eval.exists() {
                md.push_str("## Test-set means\n\n");
                md.push_str(&markdown_means(&std::fs::read_to_string(&eval).map_err(|e| PipelineError::io(&eval, e))?, 1));
            }
            if sweep.exists() {
                md.push_str("\n## Lambda sweep (upsampled cube)\n\n");
                md.push_str(&markdown_means(&std::fs::read_to_string(&sweep).map_err(|e| PipelineError::io(&sweep, e))?, usize::MAX));
            }
            if train.exists() {
                let text = std::fs::read_to_string(&train).map_err(|e| PipelineError::io(&train, e))?;
                let losses: Vec<&str> = text.lines().skip(1).collect();
                if let (Some(a), Some(b)) = (losses.first(), losses.last()) {
                    md.push_str(&format!("\n## Training\n\nfirst epoch `{a}`, last epoch `{b}` (epoch,loss)\n"));
                }
            }
            write_text(&dir.join("summary.md"), &md)
        })
    }
}

/// Markdown table from a CSV; with `sample_col` set, keep only `mean` rows.
fn markdown_means(csv: &str, sample_col: usize) -> String {
    let mut lines = csv.lines();
    let Some(header) = lines.next() else { return String::new() };
    let cols: Vec<&str> = header.split(',').collect();
    let mut out = format!("| {} |\n|{}\n", cols.join(" | "), "---|".repeat(cols.len()));
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        if sample_col != usize::MAX && f.get(sample_col) != Some(&"mean") {
            continue;
        }
        out.push_str(&format!("| {} |\n", f.join(" | ")));
    }
    out
}

fn trace_csv(trace: &[TraceRow]) -> String {
    let mut s = String::from("iteration,spectral_term,spatial_term,total\n");
    for t in trace {
        s.push_str(&format!("{},{},{},{}\n", t.iteration, t.spectral, t.spatial, t.total));
    }
    s
}

/// Seeded shuffle, or the explicit lists after checking they partition `ids`.
pub fn split_ids(ids: &[String], c: &ExperimentConfig) -> Result<(Vec<String>, Vec<String>)> {
    if let (Some(tr), Some(te)) = (&c.split.train_ids, &c.split.test_ids) {
        let mut seen = BTreeMap::new();
        for id in tr.iter().chain(te) {
            if !ids.contains(id) {
                return Err(PipelineError::config(format!("split lists unknown sample '{id}'")));
            }
            if seen.insert(id.clone(), ()).is_some() {
                return Err(PipelineError::config(format!("sample '{id}' appears twice in the split")));
            }
        }
        if seen.len() != ids.len() {
            return Err(PipelineError::config(format!("split covers {} of {} samples", seen.len(), ids.len())));
        }
        return Ok((tr.clone(), te.clone()));
    }
    let mut order = ids.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(c.split.seed));
    let n_train = (c.split.train_ratio * ids.len() as f64).round() as usize;
    let mut train = order[..n_train].to_vec();
    let mut test = order[n_train..].to_vec();
    train.sort();
    test.sort();
    Ok((train, test))
}
