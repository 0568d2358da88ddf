//! Run configuration: one JSON document drives a whole reproduction.
//!
//! A document names a preset (`desk` or `paper`, default `desk`); every other
//! field overrides the preset value of the same path. Relative paths resolve
//! against `SCGAN_DATA_DIR` when that is set.

use std::path::{Path, PathBuf};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::{load_dir, UnpairedCorpus};
use crate::eval::HeldOut;
use crate::models::{DiscriminatorConfig, GeneratorConfig};
use crate::patch::ImagePatch;
use crate::pipeline::DenoiserConfig;
use crate::schedule::TrainSchedule;
use crate::synth::{build_unpaired_corpus, derive_seed, smooth_scenes, CropSpec, GaussianNoiseSpec, NoiseSpec};
use crate::training::{InputScaling, TrainConfig};

pub const DATA_DIR_ENV: &str = "SCGAN_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    #[default]
    Desk,
    Paper,
}

impl Preset {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "desk" => Some(Self::Desk),
            "paper" => Some(Self::Paper),
            _ => None,
        }
    }
}

/// Where training patches come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    /// Directory of PNG sources; synthetic smooth scenes when absent.
    pub source_dir: Option<PathBuf>,
    /// Number of synthetic sources (split between the noisy and clean sides).
    pub synthetic_count: usize,
    /// Side of synthetic sources, or of crops when `crop` is set.
    pub patch_size: usize,
    pub channels: usize,
    pub contrast: f64,
    pub noise: NoiseSpec,
    pub split_ratio: f64,
    pub crop: Option<CropSpec>,
    /// Synthetic held-out patches for evaluation.
    pub held_out: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub preset: Preset,
    /// Root for every output of the run.
    pub out: PathBuf,
    pub corpus: CorpusConfig,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub schedule: TrainSchedule,
    pub scaling: InputScaling,
    pub denoiser: DenoiserConfig,
}

impl RunConfig {
    /// Preset values; `seed` is a placeholder that documents must override.
    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Desk => Self {
                seed: 0,
                preset,
                out: PathBuf::from("runs/desk"),
                corpus: CorpusConfig {
                    source_dir: None,
                    synthetic_count: 400,
                    patch_size: 32,
                    channels: 1,
                    contrast: 1.0,
                    noise: NoiseSpec::Gaussian(GaussianNoiseSpec { sigma: 25.0, seed: 0 }),
                    split_ratio: 0.5,
                    crop: None,
                    held_out: 64,
                },
                generator: GeneratorConfig::desk(1),
                discriminator: DiscriminatorConfig {
                    init_std: Some(0.02),
                    ..DiscriminatorConfig::paper(1)
                },
                schedule: TrainSchedule::desk(),
                scaling: InputScaling::default(),
                denoiser: DenoiserConfig::default(),
            },
            Preset::Paper => Self {
                seed: 0,
                preset,
                out: PathBuf::from("runs/paper"),
                corpus: CorpusConfig {
                    source_dir: None,
                    synthetic_count: 800,
                    patch_size: 128,
                    channels: 1,
                    contrast: 1.0,
                    noise: NoiseSpec::Gaussian(GaussianNoiseSpec { sigma: 25.0, seed: 0 }),
                    split_ratio: 0.5,
                    crop: None,
                    held_out: 64,
                },
                generator: GeneratorConfig::paper(1),
                discriminator: DiscriminatorConfig::paper(1),
                schedule: TrainSchedule::default(),
                scaling: InputScaling { mean_subtract: true },
                denoiser: DenoiserConfig {
                    depth: 17,
                    mid_channels: 64,
                    epochs: 50,
                    lr: 1e-3,
                    batch_size: 16,
                    patch_size: 64,
                },
            },
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            generator: self.generator.clone(),
            discriminator: self.discriminator.clone(),
            schedule: self.schedule.clone(),
            scaling: self.scaling,
            mask: Default::default(),
            seed: self.seed,
        }
    }

    /// Source images: the PNGs of `source_dir`, or seeded synthetic scenes
    /// quantized to 8 bits.
    pub fn sources(&self) -> crate::Result<Vec<ImagePatch>> {
        let c = &self.corpus;
        match &c.source_dir {
            Some(dir) => load_dir(dir),
            None => Ok(smooth_scenes(
                c.synthetic_count,
                c.patch_size,
                c.patch_size,
                c.channels,
                c.contrast,
                derive_seed(self.seed, &[1]),
            )
            .iter()
            .map(ImagePatch::quantize_8bit)
            .collect()),
        }
    }

    pub fn build_corpus(&self) -> crate::Result<UnpairedCorpus> {
        let c = &self.corpus;
        let noise = c.noise.with_seed(derive_seed(self.seed, &[2]));
        build_unpaired_corpus(
            &self.sources()?,
            &noise,
            c.split_ratio,
            c.crop,
            derive_seed(self.seed, &[3]),
        )
    }

    /// Synthetic held-out data, disjoint from the training sources by seed:
    /// degraded scenes with their originals, plus separate clean scenes.
    pub fn held_out(&self) -> crate::Result<HeldOut> {
        let c = &self.corpus;
        let size = c.crop.map_or(c.patch_size, |k| k.size);
        let scenes = |path: u64| -> Vec<ImagePatch> {
            smooth_scenes(
                c.held_out,
                size,
                size,
                c.channels,
                c.contrast,
                derive_seed(self.seed, &[path]),
            )
            .iter()
            .map(ImagePatch::quantize_8bit)
            .collect()
        };
        let truth = scenes(40);
        let noisy = truth
            .iter()
            .enumerate()
            .map(|(i, p)| Ok(c.noise.with_seed(derive_seed(self.seed, &[42, i as u64])).apply(p)?.0))
            .collect::<crate::Result<_>>()?;
        Ok(HeldOut {
            noisy,
            truth,
            clean: scenes(41),
        })
    }

    /// Every semantic violation of the resolved document.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let mut push = |r: crate::Result<()>| {
            if let Err(e) = r {
                v.push(e.to_string());
            }
        };
        push(self.generator.validate());
        push(self.discriminator.validate());
        push(self.corpus.noise.validate());
        let mut v2 = v;
        v2.extend(self.schedule.violations());
        v2.extend(self.denoiser.violations());
        let c = &self.corpus;
        if self.generator.channels != self.discriminator.channels || self.generator.channels != c.channels {
            v2.push(format!(
                "channels disagree: corpus {}, generator {}, discriminator {}",
                c.channels, self.generator.channels, self.discriminator.channels
            ));
        }
        if !(c.split_ratio > 0.0 && c.split_ratio < 1.0) {
            v2.push(format!(
                "corpus: split_ratio {} must lie strictly between 0 and 1",
                c.split_ratio
            ));
        }
        if c.source_dir.is_none() && c.synthetic_count < 2 {
            v2.push("corpus: synthetic_count must be at least 2".into());
        }
        let size = c.crop.map_or(c.patch_size, |k| k.size);
        if let Err(e) = self.discriminator.output_sizes(size) {
            v2.push(format!(
                "corpus: patch size {size} too small for the discriminator ({e})"
            ));
        }
        if size <= self.generator.padding {
            v2.push(format!(
                "corpus: patch size {size} must exceed generator padding {}",
                self.generator.padding
            ));
        }
        if c.held_out == 0 {
            v2.push("corpus: held_out must be at least 1".into());
        }
        if let Some(dir) = &c.source_dir {
            if !dir.is_dir() {
                v2.push(format!("corpus: source_dir {} does not exist", dir.display()));
            }
        }
        v2
    }
}

/// Recursively overlays `patch` onto `base`; objects merge, everything else
/// replaces.
fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(k) {
                    // a tagged enum switches variant wholesale
                    Some(slot) if !(slot.is_object() && v.get("kind").is_some()) => merge(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, p) => *b = p.clone(),
    }
}

/// JSON Schema of a config document. Only `seed` is required; every omitted
/// field takes its preset value.
pub fn config_schema() -> Value {
    fn relax(v: &mut Value) {
        match v {
            Value::Object(m) => {
                // tagged enums keep their discriminator
                let keep_kind = m
                    .get("required")
                    .and_then(Value::as_array)
                    .is_some_and(|r| r.iter().any(|k| k == "kind"));
                if keep_kind {
                    m.insert("required".into(), serde_json::json!(["kind"]));
                } else {
                    m.remove("required");
                }
                m.values_mut().for_each(relax);
            }
            Value::Array(a) => a.iter_mut().for_each(relax),
            _ => {}
        }
    }
    let mut schema = schemars::schema_for!(RunConfig).to_value();
    relax(&mut schema);
    schema["required"] = serde_json::json!(["seed"]);
    schema
}

/// Resolves a relative path against `SCGAN_DATA_DIR`.
pub fn resolve_path(p: &Path) -> PathBuf {
    match std::env::var_os(DATA_DIR_ENV) {
        Some(root) if p.is_relative() => PathBuf::from(root).join(p),
        _ => p.to_path_buf(),
    }
}

/// Validates a parsed document into a fully defaulted [`RunConfig`], or
/// returns every violation found.
pub fn validate_config(doc: &Value) -> Result<RunConfig, Vec<String>> {
    let Some(obj) = doc.as_object() else {
        return Err(vec!["config: the document must be a JSON object".into()]);
    };
    let mut errors = Vec::new();
    match obj.get("seed") {
        Some(s) if s.is_u64() => {}
        Some(s) => errors.push(format!("seed: expected a non-negative integer, found {s}")),
        None => errors.push("seed: required (runs never draw implicit randomness)".into()),
    }
    let preset = match obj.get("preset") {
        None => Preset::Desk,
        Some(Value::String(s)) => Preset::parse(s).unwrap_or_else(|| {
            errors.push(format!("preset: unknown preset {s:?} (expected \"desk\" or \"paper\")"));
            Preset::Desk
        }),
        Some(other) => {
            errors.push(format!("preset: expected a string, found {other}"));
            Preset::Desk
        }
    };
    let mut resolved = serde_json::to_value(RunConfig::preset(preset)).expect("presets serialize");
    merge(&mut resolved, doc);
    if !errors.is_empty() {
        return Err(errors);
    }
    let mut cfg: RunConfig = match serde_json::from_value(resolved) {
        Ok(c) => c,
        Err(e) => return Err(vec![format!("config: {e}")]),
    };
    cfg.corpus.source_dir = cfg.corpus.source_dir.as_deref().map(resolve_path);
    let v = cfg.violations();
    if v.is_empty() {
        Ok(cfg)
    } else {
        Err(v)
    }
}

/// Reads and validates a config file.
pub fn load_config(path: &Path) -> crate::Result<Result<RunConfig, Vec<String>>> {
    let text = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| crate::Error::Json {
        path: path.into(),
        source: e,
    })?;
    Ok(validate_config(&doc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn minimal_document_takes_desk_defaults() {
        let cfg = validate_config(&json!({ "seed": 3 })).unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.schedule, TrainSchedule::desk());
        assert_eq!(cfg.generator.depth, 7);
    }

    #[test]
    fn paper_preset_and_overrides() {
        let cfg = validate_config(&json!({
            "seed": 1,
            "preset": "paper",
            "schedule": { "batch_size": 8 },
            "corpus": { "noise": { "kind": "rain", "count": 4, "seed": 2 } }
        }))
        .unwrap();
        assert_eq!(cfg.generator.depth, 17);
        assert_eq!(cfg.corpus.patch_size, 128);
        assert_eq!(cfg.schedule.batch_size, 8);
        assert_eq!(cfg.schedule.ep3, TrainSchedule::default().ep3);
        assert!(matches!(cfg.corpus.noise, NoiseSpec::Rain(_)));
    }

    #[test]
    fn all_violations_are_reported() {
        let errs = validate_config(&json!({
            "seed": 1,
            "schedule": { "ep1": 5, "ep2": 3, "w1_target": -1.0 },
            "denoiser": { "depth": 2 }
        }))
        .unwrap_err();
        assert!(
            errs.iter().any(|e| e.contains("ep2") && e.contains("ep1 <= ep2")),
            "{errs:?}"
        );
        assert!(errs.iter().any(|e| e.contains("non-negativity")), "{errs:?}");
        assert!(errs.iter().any(|e| e.contains("depth 2 < 3")), "{errs:?}");
    }

    #[test]
    fn seed_is_required_and_unknown_fields_rejected() {
        let errs = validate_config(&json!({})).unwrap_err();
        assert!(errs[0].contains("seed"));
        let errs = validate_config(&json!({ "seed": 1, "schedul": {} })).unwrap_err();
        assert!(errs[0].contains("schedul"), "{errs:?}");
        let errs = validate_config(&json!({ "seed": 1, "preset": "huge" })).unwrap_err();
        assert!(errs[0].contains("huge"));
    }

    #[test]
    fn missing_source_dir_is_named() {
        let errs =
            validate_config(&json!({ "seed": 1, "corpus": { "source_dir": "/definitely/not/here" } })).unwrap_err();
        assert!(errs.iter().any(|e| e.contains("/definitely/not/here")));
    }

    #[test]
    fn corpus_and_held_out_follow_the_seed() {
        let mut cfg =
            validate_config(&json!({ "seed": 4, "corpus": { "synthetic_count": 6, "held_out": 3 } })).unwrap();
        let a = cfg.build_corpus().unwrap();
        assert_eq!(a, cfg.build_corpus().unwrap());
        assert_eq!((a.noisy().len(), a.clean().len()), (3, 3));
        let h = cfg.held_out().unwrap();
        assert_eq!((h.noisy.len(), h.truth.len(), h.clean.len()), (3, 3, 3));
        assert!(h.truth.iter().all(|p| p.data().iter().all(|v| v.fract() == 0.0)));
        cfg.seed = 5;
        assert_ne!(a, cfg.build_corpus().unwrap());
    }

    #[test]
    fn validation_is_idempotent() {
        let cfg = validate_config(&json!({ "seed": 9, "schedule": { "ep3": 40 } })).unwrap();
        let again = validate_config(&serde_json::to_value(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, again);
    }
}
