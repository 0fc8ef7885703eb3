use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::Array3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::{read_wav, write_wav, AudioClip, WavFormat};
use crate::error::{invalid, Error, Result};
use crate::features::container::{read_features, read_labels, write_features, write_labels};
use crate::features::{
    extract_features, labels_from_annotation, FeatureConfig, FeatureTensor, FoldRecord, FoldSplit, LabelMatrix,
    Standardizer, Task,
};
use crate::model::Sample;
use crate::synth::{AnnotationTrack, SceneOntology, ScenePlan, SynthesizedScene};

/// One row of `recordings.csv` in a dataset directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingRow {
    pub id: String,
    pub scene_class: String,
    /// Background recording, which is also the recording location.
    pub background_id: String,
    pub scene_index: usize,
    pub variant: usize,
    pub pitch_shift: i32,
    pub audio: PathBuf,
    pub annotation: PathBuf,
}

impl RecordingRow {
    pub fn fold_record(&self) -> FoldRecord {
        FoldRecord {
            id: self.id.clone(),
            scene_class: self.scene_class.clone(),
            location_id: self.background_id.clone(),
        }
    }
}

/// A scene plan with the SNRs its rendering achieved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub scene_index: usize,
    pub plan: ScenePlan,
    pub realized_snr_db: Vec<f64>,
}

pub const RECORDINGS_FILE: &str = "recordings.csv";
pub const PLANS_FILE: &str = "plans.json";

fn csv_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for row in reader.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes float WAVs, annotation text files, the recording index, and
/// every scene plan. Returns the written paths relative to `dir`.
pub fn write_dataset(dir: &Path, scenes: &[SynthesizedScene]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir.join("audio"))?;
    std::fs::create_dir_all(dir.join("annotations"))?;
    let mut rows = Vec::new();
    let mut plans = Vec::new();
    for (scene_index, scene) in scenes.iter().enumerate() {
        plans.push(PlanRecord {
            scene_index,
            plan: scene.plan.clone(),
            realized_snr_db: scene.realized_snr_db.clone(),
        });
        for r in &scene.recordings {
            rows.push(RecordingRow {
                id: r.id.clone(),
                scene_class: r.scene_class.clone(),
                background_id: r.background_id.clone(),
                scene_index: r.scene_index,
                variant: r.variant,
                pitch_shift: r.pitch_shift,
                audio: PathBuf::from("audio").join(format!("{}.wav", r.id)),
                annotation: PathBuf::from("annotations").join(format!("{}.txt", r.id)),
            });
        }
    }
    scenes
        .par_iter()
        .flat_map(|s| s.recordings.par_iter())
        .try_for_each(|r| -> Result<()> {
            write_wav(dir.join("audio").join(format!("{}.wav", r.id)), &r.audio, WavFormat::Float32)?;
            r.annotation.write(dir.join("annotations").join(format!("{}.txt", r.id)))
        })?;
    write_csv(&dir.join(RECORDINGS_FILE), &rows)?;
    std::fs::write(dir.join(PLANS_FILE), serde_json::to_string_pretty(&plans)? + "\n")?;

    let mut written = vec![PathBuf::from(RECORDINGS_FILE), PathBuf::from(PLANS_FILE)];
    for r in &rows {
        written.push(r.audio.clone());
        written.push(r.annotation.clone());
    }
    Ok(written)
}

pub fn read_recording_index(dataset_dir: &Path) -> Result<Vec<RecordingRow>> {
    csv_rows(&dataset_dir.join(RECORDINGS_FILE))
}

pub fn read_plans(dataset_dir: &Path) -> Result<Vec<PlanRecord>> {
    let path = dataset_dir.join(PLANS_FILE);
    if !path.exists() {
        return Err(Error::MissingFile(path));
    }
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// Features, labels, and reference annotation of one recording.
#[derive(Debug, Clone)]
pub struct StoredRecording {
    pub id: String,
    pub scene_class: String,
    pub location_id: String,
    /// Unstandardized; each fold applies its own standardizer.
    pub features: FeatureTensor,
    pub labels: LabelMatrix,
    pub annotation: AnnotationTrack,
}

/// Extracts features and frame labels for one recording.
pub fn featurize_recording(
    id: &str,
    location_id: &str,
    audio: &AudioClip,
    annotation: &AnnotationTrack,
    ontology: &SceneOntology,
    config: &FeatureConfig,
) -> Result<StoredRecording> {
    annotation.validate(ontology)?;
    let features = extract_features(audio, config)?;
    let labels = labels_from_annotation(annotation, features.frames(), features.frame_hop_s, ontology)?;
    Ok(StoredRecording {
        id: id.into(),
        scene_class: annotation.scene_label.clone(),
        location_id: location_id.into(),
        features,
        labels,
        annotation: annotation.clone(),
    })
}

/// Which part of a fold a sample set comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Portion {
    Train,
    Validation,
    Test,
}

impl Portion {
    pub fn ids(self, split: &FoldSplit) -> &[String] {
        match self {
            Portion::Train => &split.train,
            Portion::Validation => &split.validation,
            Portion::Test => &split.test,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct StoreRow {
    id: String,
    scene_class: String,
    location_id: String,
}

/// Every recording's features and labels plus one standardizer per fold,
/// each fitted on that fold's training portion only.
#[derive(Debug, Clone)]
pub struct FeatureStore {
    pub ontology: SceneOntology,
    pub config: FeatureConfig,
    pub recordings: Vec<StoredRecording>,
    pub folds: Vec<FoldSplit>,
    pub standardizers: Vec<Standardizer>,
    index: BTreeMap<String, usize>,
}

impl FeatureStore {
    pub fn build(
        ontology: SceneOntology,
        config: FeatureConfig,
        recordings: Vec<StoredRecording>,
        folds: Vec<FoldSplit>,
    ) -> Result<Self> {
        let index: BTreeMap<String, usize> = recordings.iter().enumerate().map(|(i, r)| (r.id.clone(), i)).collect();
        if index.len() != recordings.len() {
            return Err(invalid("duplicate recording id"));
        }
        for split in &folds {
            for id in split.train.iter().chain(&split.validation).chain(&split.test) {
                if !index.contains_key(id) {
                    return Err(invalid(format!("fold {} names unknown recording `{id}`", split.fold_id)));
                }
            }
        }
        let standardizers = folds
            .iter()
            .map(|split| Standardizer::fit(split.train.iter().map(|id| &recordings[index[id]].features)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            ontology,
            config,
            recordings,
            folds,
            standardizers,
            index,
        })
    }

    pub fn get(&self, id: &str) -> Result<&StoredRecording> {
        self.index
            .get(id)
            .map(|&i| &self.recordings[i])
            .ok_or_else(|| invalid(format!("unknown recording `{id}`")))
    }

    pub fn fold(&self, fold: usize) -> Result<&FoldSplit> {
        self.folds
            .get(fold)
            .ok_or_else(|| invalid(format!("fold {fold} out of range (have {})", self.folds.len())))
    }

    /// Standardized samples for one portion of a fold, in id order.
    pub fn samples(&self, fold: usize, portion: Portion, task: Task) -> Result<Vec<Sample<f32>>> {
        let split = self.fold(fold)?;
        let standardizer = &self.standardizers[fold];
        portion
            .ids(split)
            .iter()
            .map(|id| {
                let r = self.get(id)?;
                let features: Array3<f32> = standardizer.apply(&r.features)?.values;
                Ok(Sample {
                    id: id.clone(),
                    features,
                    targets: r.labels.targets(task),
                })
            })
            .collect()
    }

    /// Writes `features/`, `labels/`, `annotations/`, `standardizers/`, the
    /// fold file, the ontology, and the recording index. Returns the written
    /// paths relative to `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        for sub in ["features", "labels", "annotations", "standardizers"] {
            std::fs::create_dir_all(dir.join(sub))?;
        }
        let rate = self.config.sample_rate;
        self.recordings.par_iter().try_for_each(|r| -> Result<()> {
            write_features(dir.join("features").join(format!("{}.jsft", r.id)), &r.features, rate)?;
            write_labels(dir.join("labels").join(format!("{}.jsft", r.id)), &r.labels, r.features.frame_hop_s, rate)?;
            r.annotation.write(dir.join("annotations").join(format!("{}.txt", r.id)))
        })?;
        let rows: Vec<StoreRow> = self
            .recordings
            .iter()
            .map(|r| StoreRow {
                id: r.id.clone(),
                scene_class: r.scene_class.clone(),
                location_id: r.location_id.clone(),
            })
            .collect();
        write_csv(&dir.join(RECORDINGS_FILE), &rows)?;
        std::fs::write(dir.join("folds.json"), serde_json::to_string_pretty(&self.folds)? + "\n")?;
        std::fs::write(dir.join("ontology.toml"), self.ontology.to_toml_string())?;
        std::fs::write(dir.join("features.toml"), toml::to_string(&self.config).expect("config serializes"))?;
        let mut written: Vec<PathBuf> = ["recordings.csv", "folds.json", "ontology.toml", "features.toml"]
            .iter()
            .map(PathBuf::from)
            .collect();
        for (k, s) in self.standardizers.iter().enumerate() {
            let rel = PathBuf::from("standardizers").join(format!("fold_{k}.json"));
            std::fs::write(dir.join(&rel), serde_json::to_string_pretty(s)? + "\n")?;
            written.push(rel);
        }
        for r in &self.recordings {
            written.push(PathBuf::from("features").join(format!("{}.jsft", r.id)));
            written.push(PathBuf::from("labels").join(format!("{}.jsft", r.id)));
            written.push(PathBuf::from("annotations").join(format!("{}.txt", r.id)));
        }
        Ok(written)
    }

    /// Loads a store written by [`FeatureStore::write`]. Standardizers are
    /// read back rather than refitted.
    pub fn load(dir: &Path) -> Result<Self> {
        let ontology = SceneOntology::load(dir.join("ontology.toml"))?;
        let config: FeatureConfig = toml::from_str(&std::fs::read_to_string(dir.join("features.toml"))?)
            .map_err(|e| Error::Config(e.to_string()))?;
        let folds: Vec<FoldSplit> = serde_json::from_str(&std::fs::read_to_string(dir.join("folds.json"))?)?;
        let rows: Vec<StoreRow> = csv_rows(&dir.join(RECORDINGS_FILE))?;
        let n_scenes = ontology.n_scenes();
        let recordings = rows
            .par_iter()
            .map(|row| {
                let (features, _) = read_features(dir.join("features").join(format!("{}.jsft", row.id)))?;
                let labels = read_labels(dir.join("labels").join(format!("{}.jsft", row.id)), n_scenes)?;
                let annotation = AnnotationTrack::read(dir.join("annotations").join(format!("{}.txt", row.id)))?;
                Ok(StoredRecording {
                    id: row.id.clone(),
                    scene_class: row.scene_class.clone(),
                    location_id: row.location_id.clone(),
                    features,
                    labels,
                    annotation,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let standardizers = (0..folds.len())
            .map(|k| -> Result<Standardizer> {
                let path = dir.join("standardizers").join(format!("fold_{k}.json"));
                Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
            })
            .collect::<Result<Vec<_>>>()?;
        let index = recordings.iter().enumerate().map(|(i, r)| (r.id.clone(), i)).collect();
        Ok(Self {
            ontology,
            config,
            recordings,
            folds,
            standardizers,
            index,
        })
    }
}

/// Reads the audio and annotation of one dataset row.
pub fn load_recording(dataset_dir: &Path, row: &RecordingRow) -> Result<(AudioClip, AnnotationTrack)> {
    Ok((
        read_wav(dataset_dir.join(&row.audio))?,
        AnnotationTrack::read(dataset_dir.join(&row.annotation))?,
    ))
}
