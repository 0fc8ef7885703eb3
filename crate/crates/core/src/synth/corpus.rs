use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audio::{
    peak_normalize, read_wav, resample, trim_leading_silence, apply_gain, write_wav, AudioClip, WavFormat,
    SCENE_RATE,
};
use crate::error::{invalid, Error, Result};

/// Every source recording is stored at these gains relative to its
/// peak-normalized form.
pub const GAIN_VARIANTS_DB: [f64; 3] = [-10.0, 0.0, 10.0];

/// One isolated event recording before corpus preparation.
#[derive(Debug, Clone)]
pub struct SourceClip {
    pub event_class: String,
    pub source_id: String,
    pub clip: AudioClip,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEntry {
    pub id: usize,
    pub event_class: String,
    pub source_id: String,
    pub gain_db: f64,
    pub clip: AudioClip,
}

#[derive(Debug, Clone, Copy)]
pub struct PrepareOptions {
    /// Leading samples quieter than this (dB relative to peak) are dropped.
    pub trim_threshold_db: f64,
    pub sample_rate: u32,
}

impl Default for PrepareOptions {
    fn default() -> Self {
        Self {
            trim_threshold_db: -60.0,
            sample_rate: SCENE_RATE,
        }
    }
}

/// The gain-tripled event corpus.
#[derive(Debug, Clone, Default)]
pub struct EventCorpus {
    entries: Vec<CorpusEntry>,
}

/// Row of the event-source manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceRow {
    pub event_class: String,
    pub source_id: String,
    pub path: PathBuf,
}

/// Row of the background manifest. The background id doubles as the
/// recording-location id used for grouped folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundRow {
    pub background_id: String,
    pub scene_class: String,
    pub path: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexRow {
    entry_id: usize,
    event_class: String,
    source_id: String,
    gain_db: f64,
    path: PathBuf,
}

fn prepare_source(clip: &AudioClip, opts: &PrepareOptions) -> Result<AudioClip> {
    let clip = peak_normalize(clip);
    let clip = trim_leading_silence(&clip, opts.trim_threshold_db)?;
    let clip = resample(&clip, opts.sample_rate)?;
    Ok(peak_normalize(&clip))
}

impl EventCorpus {
    /// Normalizes, trims, and resamples every source, then emits one entry
    /// per gain variant. Entries are ordered by (class, source, gain).
    pub fn prepare(sources: &[SourceClip], opts: &PrepareOptions) -> Result<Self> {
        let mut order: Vec<&SourceClip> = sources.iter().collect();
        order.sort_by(|a, b| (&a.event_class, &a.source_id).cmp(&(&b.event_class, &b.source_id)));
        if let Some(w) = order
            .windows(2)
            .find(|w| (&w[0].event_class, &w[0].source_id) == (&w[1].event_class, &w[1].source_id))
        {
            return Err(invalid(format!(
                "duplicate source `{}/{}`",
                w[0].event_class, w[0].source_id
            )));
        }
        let mut entries = Vec::with_capacity(order.len() * GAIN_VARIANTS_DB.len());
        for src in order {
            let base = prepare_source(&src.clip, opts)?;
            for &gain_db in &GAIN_VARIANTS_DB {
                entries.push(CorpusEntry {
                    id: entries.len(),
                    event_class: src.event_class.clone(),
                    source_id: src.source_id.clone(),
                    gain_db,
                    clip: apply_gain(&base, gain_db),
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[CorpusEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: usize) -> Result<&CorpusEntry> {
        self.entries
            .get(id)
            .ok_or_else(|| invalid(format!("no corpus entry {id}")))
    }

    pub fn entries_for(&self, event_class: &str) -> Vec<&CorpusEntry> {
        self.entries.iter().filter(|e| e.event_class == event_class).collect()
    }

    pub fn classes(&self) -> BTreeSet<&str> {
        self.entries.iter().map(|e| e.event_class.as_str()).collect()
    }

    /// Writes float WAVs under `dir/audio/` plus the `dir/corpus.csv` index.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let mut index = csv::Writer::from_path(dir.join("corpus.csv")).map_err(Error::from)?;
        for e in &self.entries {
            let rel = PathBuf::from("audio")
                .join(&e.event_class)
                .join(format!("{}_{:+03}dB.wav", e.source_id, e.gain_db as i32));
            let full = dir.join(&rel);
            std::fs::create_dir_all(full.parent().unwrap())?;
            write_wav(&full, &e.clip, WavFormat::Float32)?;
            index.serialize(IndexRow {
                entry_id: e.id,
                event_class: e.event_class.clone(),
                source_id: e.source_id.clone(),
                gain_db: e.gain_db,
                path: rel,
            })?;
        }
        index.flush()?;
        Ok(())
    }

    /// Loads a corpus written by [`EventCorpus::write`].
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let index_path = dir.join("corpus.csv");
        if !index_path.exists() {
            return Err(Error::MissingFile(index_path));
        }
        let mut reader = csv::Reader::from_path(&index_path)?;
        let mut entries = Vec::new();
        for row in reader.deserialize() {
            let row: IndexRow = row?;
            if row.entry_id != entries.len() {
                return Err(Error::Format(format!("corpus index out of order at entry {}", row.entry_id)));
            }
            entries.push(CorpusEntry {
                id: row.entry_id,
                clip: read_wav(dir.join(&row.path))?,
                event_class: row.event_class,
                source_id: row.source_id,
                gain_db: row.gain_db,
            });
        }
        Ok(Self { entries })
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for (i, row) in reader.deserialize().enumerate() {
        rows.push(row.map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: i + 2,
            message: e.to_string(),
        })?);
    }
    Ok(rows)
}

/// Reads an `event_class,source_id,path` manifest. Relative paths resolve
/// against the manifest's directory.
pub fn read_source_manifest(path: impl AsRef<Path>) -> Result<Vec<SourceRow>> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(read_rows::<SourceRow>(path)?
        .into_iter()
        .map(|mut r| {
            r.path = resolve(base, &r.path);
            r
        })
        .collect())
}

/// Reads a `background_id,scene_class,path` manifest.
pub fn read_background_manifest(path: impl AsRef<Path>) -> Result<Vec<BackgroundRow>> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(read_rows::<BackgroundRow>(path)?
        .into_iter()
        .map(|mut r| {
            r.path = resolve(base, &r.path);
            r
        })
        .collect())
}

/// Loads every source listed in a manifest. Missing files are reported
/// together.
pub fn load_sources(rows: &[SourceRow]) -> Result<Vec<SourceClip>> {
    let missing: Vec<String> = rows
        .iter()
        .filter(|r| !r.path.exists())
        .map(|r| r.path.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(invalid(format!("missing source files: {}", missing.join(", "))));
    }
    rows.iter()
        .map(|r| {
            Ok(SourceClip {
                event_class: r.event_class.clone(),
                source_id: r.source_id.clone(),
                clip: read_wav(&r.path)?,
            })
        })
        .collect()
}
