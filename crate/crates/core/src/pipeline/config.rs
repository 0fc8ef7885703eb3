use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::digest::sha256_hex;
use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::model::{NetworkConfig, TrainConfig};
use crate::synth::procedural::ProceduralConfig;
use crate::synth::{SceneOntology, SynthParams};

const DESK_PRESET: &str = include_str!("../../configs/experiment_desk.toml");
const PAPER_PRESET: &str = include_str!("../../configs/experiment_paper.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub scenes_per_background: usize,
    #[serde(flatten)]
    pub synth: SynthParams,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            scenes_per_background: 10,
            synth: SynthParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FoldConfig {
    pub k: usize,
    /// Share of each scene's training locations held out for validation.
    pub validation_fraction: f64,
}

impl Default for FoldConfig {
    fn default() -> Self {
        Self {
            k: 5,
            validation_fraction: 0.125,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub asc_threshold: f64,
    /// Event threshold used when tuning is off or no validation set exists.
    pub sed_threshold: f64,
    /// Pick the event threshold from `sed_threshold_grid` by validation F1.
    pub tune_sed_threshold: bool,
    pub sed_threshold_grid: Vec<f64>,
    pub segment_s: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            asc_threshold: crate::eval::DEFAULT_THRESHOLD,
            sed_threshold: 0.5,
            tune_sed_threshold: true,
            sed_threshold_grid: (1..10).map(|i| f64::from(i) / 10.0).collect(),
            segment_s: 1.0,
        }
    }
}

/// Every parameter of an experiment, from corpus generation to scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Master seed; every stage derives its own seeds from it.
    pub seed: u64,
    /// `desk`, `paper`, or a path to an ontology TOML file.
    pub ontology: String,
    /// Event-source manifest (`event_class,source_id,path`).
    pub corpus_manifest: Option<PathBuf>,
    /// Background manifest (`background_id,scene_class,path`).
    pub background_manifest: Option<PathBuf>,
    pub procedural: ProceduralConfig,
    pub dataset: DatasetConfig,
    pub features: FeatureConfig,
    pub folds: FoldConfig,
    /// `output_units` is replaced by the task's label width.
    pub network: NetworkConfig,
    /// `seed` is replaced by a per-task, per-fold seed.
    pub training: TrainConfig,
    pub evaluation: EvalConfig,
}

/// Paper-scale values; the presets are written against these defaults.
impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 2019,
            ontology: "paper".into(),
            corpus_manifest: None,
            background_manifest: None,
            procedural: ProceduralConfig::default(),
            dataset: DatasetConfig::default(),
            features: FeatureConfig::default(),
            folds: FoldConfig::default(),
            network: NetworkConfig::paper(),
            training: TrainConfig::default(),
            evaluation: EvalConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Three scenes, six events, 5 s recordings, 32 mel bands, 3 folds.
    pub fn desk() -> Self {
        Self::from_toml_str(DESK_PRESET).expect("bundled preset is valid")
    }

    /// Ten scenes, 32 events, 30 s recordings, 128 mel bands, 5 folds.
    pub fn paper() -> Self {
        Self::from_toml_str(PAPER_PRESET).expect("bundled preset is valid")
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "paper" => Ok(Self::paper()),
            other => Err(Error::Config(format!("unknown preset `{other}` (desk, paper)"))),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies `key.path=value` overrides. Values parse as TOML literals and
    /// fall back to plain strings.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        let mut root = toml::Value::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        let mut keys = Vec::with_capacity(overrides.len());
        for o in overrides {
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
            let value = parse_value(raw.trim());
            set_path(&mut root, key.trim(), value)?;
            keys.push(key.trim());
        }
        let config: Self = root.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        // Deserialization drops unknown fields; a key absent after the round
        // trip was never a config key.
        let applied = toml::Value::try_from(&config).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(k) = keys.iter().find(|k| lookup(&applied, k).is_none()) {
            return Err(Error::Config(format!("unknown config key `{k}`")));
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: &str| Err(Error::Config(m.into()));
        self.dataset.synth.validate()?;
        self.network.validate()?;
        let t = &self.training;
        if t.epochs == 0 || t.batch_size == 0 || !(t.adam.learning_rate > 0.0) {
            return cfg("training needs positive epochs, batch size and learning rate");
        }
        if self.folds.k < 2 || !(0.0..1.0).contains(&self.folds.validation_fraction) {
            return cfg("folds.k must be at least 2 and validation_fraction in [0, 1)");
        }
        if self.dataset.scenes_per_background == 0 {
            return cfg("dataset.scenes_per_background must be positive");
        }
        if self.network.n_mels != self.features.n_mels {
            return cfg("network.n_mels must equal features.n_mels");
        }
        if self.network.input_channels != 2 {
            return cfg("network.input_channels must be 2 (raw and smoothed log-mel)");
        }
        if self.features.smooth_window % 2 == 0 {
            return cfg("features.smooth_window must be odd");
        }
        let e = &self.evaluation;
        let in_unit = |t: f64| t > 0.0 && t < 1.0;
        if !in_unit(e.asc_threshold) || !in_unit(e.sed_threshold) || !e.sed_threshold_grid.iter().all(|&t| in_unit(t)) {
            return cfg("thresholds must lie in (0, 1)");
        }
        if e.tune_sed_threshold && e.sed_threshold_grid.is_empty() {
            return cfg("evaluation.sed_threshold_grid is empty");
        }
        if !(e.segment_s > 0.0) {
            return cfg("evaluation.segment_s must be positive");
        }
        Ok(())
    }

    pub fn load_ontology(&self) -> Result<SceneOntology> {
        match self.ontology.as_str() {
            "desk" => Ok(SceneOntology::desk()),
            "paper" => Ok(SceneOntology::paper()),
            path => SceneOntology::load(path),
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn lookup<'a>(root: &'a toml::Value, key: &str) -> Option<&'a toml::Value> {
    key.split('.').try_fold(root, |node, part| node.get(part))
}

fn set_path(root: &mut toml::Value, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    let mut node = root;
    for (i, part) in parts.iter().enumerate() {
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{}` is not a table", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            table.insert(part.to_string(), value);
            return Ok(());
        }
        node = table
            .get_mut(*part)
            .ok_or_else(|| Error::Config(format!("unknown config key `{key}`")))?;
    }
    unreachable!("split yields at least one part")
}
