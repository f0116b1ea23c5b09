//! Experiment configuration: one JSON document with a section per stage.

use std::path::{Path, PathBuf};

use hsfuse_core::degrade::{DegradeSpec, DEFAULT_KERNEL_SIZE, SIGMA_PER_BETA};
use hsfuse_core::dip::{DipConfig, Objective};
use hsfuse_core::hyperkite::HyperKiteConfig;
use hsfuse_core::metrics::ErgasForm;
use hsfuse_core::resample::BaselineMethod;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{PipelineError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset_name: String,
    /// Scene cube container (read by `prepare`, written by `toygen`).
    pub scene: PathBuf,
    pub output_root: PathBuf,
    pub toy: ToyConfig,
    pub degrade: DegradeSection,
    pub split: SplitConfig,
    pub upsample: UpsampleSection,
    pub dip: DipConfig,
    pub hyperkite: HyperKiteConfig,
    pub fuse: FuseSection,
    pub evaluate: EvaluateSection,
    pub lambda_sweep: Vec<f64>,
    /// Composite bands in (B, G, R) order, zero-based; `None` picks first/middle/last.
    pub rgb_bands: Option<[usize; 3]>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset_name: "toy".into(),
            scene: PathBuf::from("runs/toy/scene"),
            output_root: PathBuf::from("runs/toy"),
            toy: ToyConfig::default(),
            degrade: DegradeSection::default(),
            split: SplitConfig::default(),
            upsample: UpsampleSection::default(),
            dip: DipConfig::default(),
            hyperkite: HyperKiteConfig::default(),
            fuse: FuseSection::default(),
            evaluate: EvaluateSection::default(),
            lambda_sweep: (0..=10).map(|i| i as f64 / 10.0).collect(),
            rgb_bands: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    pub count: usize,
    pub bands: usize,
    pub size: usize,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self { count: 16, bands: 4, size: 32, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DegradeSection {
    pub beta: usize,
    pub kernel_size: usize,
    /// Defaults to `0.4247 * beta`.
    pub sigma: Option<f64>,
    pub pan_band_count: usize,
    /// Square patch edge; `None` keeps the scene whole.
    pub patch_size: Option<usize>,
    /// Divide by the scene maximum before patching.
    pub normalize: bool,
}

impl Default for DegradeSection {
    fn default() -> Self {
        Self { beta: 2, kernel_size: DEFAULT_KERNEL_SIZE, sigma: None, pan_band_count: 4, patch_size: Some(32), normalize: true }
    }
}

impl DegradeSection {
    pub fn spec(&self) -> DegradeSpec {
        let spec = DegradeSpec::new(self.beta, self.pan_band_count).with_kernel_size(self.kernel_size);
        spec.with_sigma(self.sigma.unwrap_or(SIGMA_PER_BETA * self.beta as f64))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub seed: u64,
    pub train_ratio: f64,
    pub train_ids: Option<Vec<String>>,
    pub test_ids: Option<Vec<String>>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { seed: 0, train_ratio: 0.5, train_ids: None, test_ids: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpsampleMethod {
    DipQss,
    DipSpectral,
    Nearest,
    Bicubic,
    /// Copy the reference through; plumbing checks only.
    Reference,
}

impl UpsampleMethod {
    pub fn name(self) -> &'static str {
        match self {
            Self::DipQss => "dip-qss",
            Self::DipSpectral => "dip-spectral",
            Self::Nearest => "nearest",
            Self::Bicubic => "bicubic",
            Self::Reference => "reference",
        }
    }

    pub fn is_dip(self) -> bool {
        matches!(self, Self::DipQss | Self::DipSpectral)
    }

    pub fn objective(self) -> Option<Objective> {
        match self {
            Self::DipQss => Some(Objective::Qss),
            Self::DipSpectral => Some(Objective::Spectral),
            _ => None,
        }
    }

    pub fn baseline(self) -> Option<BaselineMethod> {
        match self {
            Self::Nearest => Some(BaselineMethod::Nearest),
            Self::Bicubic => Some(BaselineMethod::Bicubic),
            _ => None,
        }
    }
}

impl std::str::FromStr for UpsampleMethod {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(Value::String(s.into())).map_err(|_| PipelineError::config(format!("unknown upsample method '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subset {
    All,
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UpsampleSection {
    pub method: UpsampleMethod,
    pub subset: Subset,
}

impl Default for UpsampleSection {
    fn default() -> Self {
        Self { method: UpsampleMethod::DipQss, subset: Subset::All }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Residual {
    Hyperkite,
    /// `x_res = 0`; fused output equals the upsampled cube (clamped).
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FuseSection {
    pub residual: Residual,
}

impl Default for FuseSection {
    fn default() -> Self {
        Self { residual: Residual::Hyperkite }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub sources: Vec<Source>,
    pub ergas_form: ErgasForm,
    pub emit_images: bool,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self { sources: vec![Source::Upsampled, Source::Fused], ergas_form: ErgasForm::Canonical, emit_images: true }
    }
}

/// Which cube is scored against the reference.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    Upsampled,
    Fused,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| PipelineError::config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        Self::from_json(&text).map_err(|e| PipelineError::config(format!("{}: {e}", path.display())))
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// Apply `key=value` overrides; keys are dotted paths into the document.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut doc = self.to_value();
        for o in overrides {
            apply_override(&mut doc, o.as_ref())?;
        }
        let cfg: Self = serde_json::from_value(doc).map_err(|e| PipelineError::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.degrade.beta == 0 {
            return Err(PipelineError::config("degrade.beta must be positive"));
        }
        if self.lambda_sweep.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(PipelineError::config("lambda_sweep values must be finite and non-negative"));
        }
        if !(0.0..=1.0).contains(&self.split.train_ratio) {
            return Err(PipelineError::config("split.train_ratio must lie in [0, 1]"));
        }
        if self.split.train_ids.is_some() != self.split.test_ids.is_some() {
            return Err(PipelineError::config("split.train_ids and split.test_ids must be given together"));
        }
        self.dip.validate()?;
        Ok(())
    }

    /// DIP settings as used by the upsample stage.
    pub fn dip_for(&self, method: UpsampleMethod, lambda: f64) -> DipConfig {
        let mut dip = self.dip.clone();
        dip.lambda = lambda;
        if let Some(o) = method.objective() {
            dip.objective = o;
        }
        dip
    }
}

fn apply_override(doc: &mut Value, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| PipelineError::config(format!("override '{spec}' is not of the form key=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(PipelineError::config(format!("override '{spec}' has an empty key")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    let mut node = doc;
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        if node.is_null() {
            *node = Value::Object(Default::default());
        }
        let obj = node
            .as_object_mut()
            .ok_or_else(|| PipelineError::config(format!("override '{key}': '{}' is not a section", parts[..i].join("."))))?;
        if !obj.contains_key(*part) && !(obj.is_empty() && i > 0) {
            return Err(PipelineError::config(format!("override '{key}': unknown key '{part}'")));
        }
        if last {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert(Value::Null);
    }
    unreachable!()
}

/// Hex SHA-256 of the canonical (sorted-key, compact) JSON form.
pub fn canonical_hash(v: &Value) -> String {
    hex::encode(Sha256::digest(canonical_json(v).as_bytes()))
}

pub fn canonical_json(v: &Value) -> String {
    // serde_json's map is ordered by key unless `preserve_order` is enabled;
    // re-sort explicitly so the hash never depends on that feature.
    fn sort(v: &Value) -> Value {
        match v {
            Value::Object(m) => {
                let mut keys: Vec<&String> = m.keys().collect();
                keys.sort();
                Value::Object(keys.into_iter().map(|k| (k.clone(), sort(&m[k]))).collect())
            }
            Value::Array(a) => Value::Array(a.iter().map(sort).collect()),
            other => other.clone(),
        }
    }
    serde_json::to_string(&sort(v)).expect("json")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_sweep_is_eleven_steps() {
        let c = ExperimentConfig::default();
        assert_eq!(c.lambda_sweep.len(), 11);
        assert_eq!(c.lambda_sweep[8], 0.8);
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let c = ExperimentConfig::default()
            .with_overrides(&["dip.lambda=0.3", "upsample.method=bicubic", "hyperkite.widths=[4,4,4,4,4,4,0]", "degrade.sigma=1.5"])
            .unwrap();
        assert_eq!(c.dip.lambda, 0.3);
        assert_eq!(c.upsample.method, UpsampleMethod::Bicubic);
        assert_eq!(c.hyperkite.widths, vec![4, 4, 4, 4, 4, 4, 0]);
        assert_eq!(c.degrade.sigma, Some(1.5));
        assert_eq!(c.degrade.spec().sigma, 1.5);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::default().with_overrides(&["dip.lamda=0.3"]).is_err());
        assert!(ExperimentConfig::default().with_overrides(&["nokey"]).is_err());
        assert!(ExperimentConfig::from_json(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn hash_ignores_key_order() {
        let a: Value = serde_json::from_str(r#"{"b": 1, "a": {"y": 2, "x": [3, 4]}}"#).unwrap();
        let b: Value = serde_json::from_str(r#"{"a": {"x": [3, 4], "y": 2}, "b": 1}"#).unwrap();
        assert_eq!(canonical_hash(&a), canonical_hash(&b));
        assert_eq!(canonical_json(&a), r#"{"a":{"x":[3,4],"y":2},"b":1}"#);
    }

    #[test]
    fn round_trips_through_json() {
        let c = ExperimentConfig::default();
        let text = serde_json::to_string_pretty(&c).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), c);
        assert_eq!(ExperimentConfig::from_json("{}").unwrap(), c);
    }

    #[test]
    fn methods_parse() {
        assert_eq!("dip-spectral".parse::<UpsampleMethod>().unwrap(), UpsampleMethod::DipSpectral);
        assert!("lanczos".parse::<UpsampleMethod>().is_err());
    }
}
