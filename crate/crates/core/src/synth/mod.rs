//! Scene planning and rendering.
//!
//! A [`ScenePlan`] holds every random draw for one soundscape; rendering
//! a plan against the corpus and its background is deterministic.

pub mod annotation;
pub mod corpus;
pub mod dataset;
mod ontology;
pub mod plan;
pub mod procedural;
pub mod render;

pub use annotation::{max_concurrency, AnnotatedEvent, AnnotationTrack};
pub use corpus::{CorpusEntry, EventCorpus, PrepareOptions, SourceClip, GAIN_VARIANTS_DB};
pub use dataset::{synthesize_dataset, synthesize_scene, SynthesizedRecording, SynthesizedScene};
pub use ontology::SceneOntology;
pub use plan::{draw_event_count, plan_scene, plan_scene_with_count, EventPlacement, ScenePlan, SynthParams};
pub use procedural::Background;
pub use render::{augment_scene_pitch, render_scene, render_scene_detailed, snr_gain, RenderedScene};

#[cfg(test)]
pub(crate) mod test_util {
    use super::procedural::{generate, ProceduralConfig};
    use super::*;
    use crate::audio::{peak_normalize, AudioClip};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Desk ontology with two procedural sources per event class.
    pub fn tiny_corpus() -> (SceneOntology, EventCorpus) {
        let c = generate(&ProceduralConfig {
            sources_per_event: 2,
            backgrounds_per_scene: 1,
            background_duration_s: 0.1,
            seed: 3,
        })
        .unwrap();
        let corpus = EventCorpus::prepare(&c.sources, &PrepareOptions::default()).unwrap();
        (c.ontology, corpus)
    }

    pub fn noise_background(duration_s: f64, seed: u64) -> AudioClip {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = (duration_s * 44_100.0) as usize;
        let clip = AudioClip::new((0..n).map(|_| rng.gen_range(-0.5..0.5)).collect(), 44_100).unwrap();
        peak_normalize(&clip)
    }
}
