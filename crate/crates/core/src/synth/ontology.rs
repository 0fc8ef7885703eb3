use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PAPER_ONTOLOGY: &str = include_str!("../../configs/ontology_paper.toml");
const DESK_ONTOLOGY: &str = include_str!("../../configs/ontology_desk.toml");

/// Scene classes, event classes, and the scene -> event compatibility map.
///
/// Label matrices use the column layout `[scenes..., events..., no_event]`,
/// so the label width is `scenes + events + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneOntology {
    pub scenes: Vec<String>,
    pub events: Vec<String>,
    #[serde(default)]
    pub single_scene_exceptions: Vec<String>,
    pub compatibility: BTreeMap<String, Vec<String>>,
}

impl SceneOntology {
    /// The ten-scene / thirty-two-event ontology.
    pub fn paper() -> Self {
        Self::from_toml_str(PAPER_ONTOLOGY).expect("bundled ontology is valid")
    }

    /// Three scenes and six events, paired with the procedural corpus.
    pub fn desk() -> Self {
        Self::from_toml_str(DESK_ONTOLOGY).expect("bundled ontology is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let ontology: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        ontology.validate()?;
        Ok(ontology)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("ontology serializes")
    }

    /// Hard structural checks: unique labels, every scene has a list, and
    /// every listed event is known.
    pub fn validate(&self) -> Result<()> {
        let scenes: BTreeSet<&str> = self.scenes.iter().map(String::as_str).collect();
        let events: BTreeSet<&str> = self.events.iter().map(String::as_str).collect();
        if scenes.len() != self.scenes.len() || events.len() != self.events.len() {
            return Err(Error::Config("duplicate class label".into()));
        }
        if self.scenes.is_empty() || self.events.is_empty() {
            return Err(Error::Config("ontology needs scenes and events".into()));
        }
        for scene in &self.scenes {
            let list = self
                .compatibility
                .get(scene)
                .ok_or_else(|| Error::Config(format!("scene `{scene}` has no event list")))?;
            if list.is_empty() {
                return Err(Error::Config(format!("scene `{scene}` has an empty event list")));
            }
            if let Some(e) = list.iter().find(|e| !events.contains(e.as_str())) {
                return Err(Error::UnknownEvent(e.clone()));
            }
        }
        if let Some(s) = self.compatibility.keys().find(|s| !scenes.contains(s.as_str())) {
            return Err(Error::UnknownScene(s.clone()));
        }
        Ok(())
    }

    /// Number of scenes each event class appears in.
    pub fn scene_counts(&self) -> BTreeMap<&str, usize> {
        let mut counts: BTreeMap<&str, usize> = self.events.iter().map(|e| (e.as_str(), 0)).collect();
        for list in self.compatibility.values() {
            for e in list.iter().collect::<BTreeSet<_>>() {
                *counts.get_mut(e.as_str()).unwrap() += 1;
            }
        }
        counts
    }

    /// Event classes found in fewer than two scenes that are not listed as
    /// designated exceptions.
    pub fn single_scene_events(&self) -> Vec<String> {
        self.scene_counts()
            .into_iter()
            .filter(|&(e, n)| n < 2 && !self.single_scene_exceptions.iter().any(|x| x == e))
            .map(|(e, _)| e.to_string())
            .collect()
    }

    pub fn scene_index(&self, scene: &str) -> Result<usize> {
        self.scenes
            .iter()
            .position(|s| s == scene)
            .ok_or_else(|| Error::UnknownScene(scene.to_string()))
    }

    pub fn event_index(&self, event: &str) -> Result<usize> {
        self.events
            .iter()
            .position(|e| e == event)
            .ok_or_else(|| Error::UnknownEvent(event.to_string()))
    }

    pub fn compatible_events(&self, scene: &str) -> Result<&[String]> {
        self.compatibility
            .get(scene)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownScene(scene.to_string()))
    }

    pub fn is_compatible(&self, scene: &str, event: &str) -> bool {
        self.compatibility
            .get(scene)
            .is_some_and(|list| list.iter().any(|e| e == event))
    }

    pub fn n_scenes(&self) -> usize {
        self.scenes.len()
    }

    pub fn n_events(&self) -> usize {
        self.events.len()
    }

    /// Width of a per-frame label row: scenes, events, and a trailing
    /// "no foreground event" column.
    pub fn label_width(&self) -> usize {
        self.scenes.len() + self.events.len() + 1
    }

    /// Stable digest of the ontology contents.
    pub fn digest(&self) -> String {
        crate::digest::sha256_hex(self.to_toml_string().as_bytes())
    }
}
