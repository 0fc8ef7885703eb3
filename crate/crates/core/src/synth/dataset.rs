use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::procedural::Background;
use super::render::{augment_scene_pitch, render_scene_detailed};
use super::{plan_scene, AnnotationTrack, EventCorpus, SceneOntology, ScenePlan, SynthParams};
use crate::audio::AudioClip;
use crate::digest::derive_seed;
use crate::error::{invalid, Result};

/// One recording of the final dataset (a base scene or a pitch variant).
#[derive(Debug, Clone)]
pub struct SynthesizedRecording {
    pub id: String,
    pub scene_class: String,
    pub background_id: String,
    pub scene_index: usize,
    /// 0 for the base scene, 1 and 2 for the pitch-shifted copies.
    pub variant: usize,
    pub pitch_shift: i32,
    pub audio: AudioClip,
    pub annotation: AnnotationTrack,
}

/// A planned scene with its three recordings.
#[derive(Debug, Clone)]
pub struct SynthesizedScene {
    pub plan: ScenePlan,
    pub realized_snr_db: Vec<f64>,
    pub recordings: Vec<SynthesizedRecording>,
}

pub fn recording_id(scene_index: usize, variant: usize) -> String {
    format!("s{scene_index:05}_v{variant}")
}

/// Plans, renders, and pitch-augments scene number `scene_index` on the
/// given background. The scene seed is derived from `(master_seed, scene_index)`.
pub fn synthesize_scene(
    scene_index: usize,
    background: &Background,
    ontology: &SceneOntology,
    corpus: &EventCorpus,
    params: &SynthParams,
    master_seed: u64,
) -> Result<SynthesizedScene> {
    let seed = derive_seed(master_seed, scene_index as u64);
    let plan = plan_scene(
        &background.scene_class,
        &background.background_id,
        ontology,
        corpus,
        params,
        seed,
    )?;
    let rendered = render_scene_detailed(&plan, corpus, &background.clip)?;
    let mut aug_rng = ChaCha8Rng::seed_from_u64(seed);
    aug_rng.set_stream(1);
    let variants = augment_scene_pitch(&rendered.audio, &rendered.annotation, params.scene_pitch_range, &mut aug_rng)?;

    let make = |variant: usize, pitch_shift: i32, audio: AudioClip, annotation: AnnotationTrack| SynthesizedRecording {
        id: recording_id(scene_index, variant),
        scene_class: background.scene_class.clone(),
        background_id: background.background_id.clone(),
        scene_index,
        variant,
        pitch_shift,
        audio,
        annotation,
    };
    let mut recordings = vec![make(0, 0, rendered.audio, rendered.annotation)];
    for (k, v) in variants.into_iter().enumerate() {
        recordings.push(make(k + 1, v.semitones, v.audio, v.annotation));
    }
    Ok(SynthesizedScene {
        plan,
        realized_snr_db: rendered.realized_snr_db,
        recordings,
    })
}

/// Synthesizes `scenes_per_background` scenes on every background, ordered
/// by background id. Scenes render in parallel; output order is fixed.
pub fn synthesize_dataset(
    backgrounds: &[Background],
    ontology: &SceneOntology,
    corpus: &EventCorpus,
    params: &SynthParams,
    scenes_per_background: usize,
    master_seed: u64,
) -> Result<Vec<SynthesizedScene>> {
    let mut order: Vec<&Background> = backgrounds.iter().collect();
    order.sort_by(|a, b| a.background_id.cmp(&b.background_id));
    if let Some(b) = order.iter().find(|b| ontology.scene_index(&b.scene_class).is_err()) {
        return Err(invalid(format!("background `{}` has unknown scene `{}`", b.background_id, b.scene_class)));
    }
    let jobs: Vec<(usize, &Background)> = order
        .iter()
        .enumerate()
        .flat_map(|(bi, b)| (0..scenes_per_background).map(move |j| (bi * scenes_per_background + j, *b)))
        .collect();
    jobs.par_iter()
        .map(|&(idx, bg)| synthesize_scene(idx, bg, ontology, corpus, params, master_seed))
        .collect()
}
