use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{EventCorpus, SceneOntology};
use crate::audio::SCENE_RATE;
use crate::error::{invalid, Error, Result};

/// Randomization rules for scene planning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub duration_s: f64,
    pub sample_rate: u32,
    /// Maximum number of simultaneously active events.
    pub polyphony: usize,
    pub snr_db: (f64, f64),
    pub pitch_semitones: (f64, f64),
    pub stretch_ratio: (f64, f64),
    /// Onset mean as a fraction of the scene duration.
    pub onset_mean_fraction: f64,
    /// Onset standard deviation as a fraction of the scene duration.
    pub onset_std_fraction: f64,
    pub max_onset_retries: usize,
    pub background_attenuation_db: f64,
    /// Extra spacing (seconds) appended to each event when checking the
    /// polyphony cap, so that no analysis frame sees more than `polyphony`
    /// events. One feature hop at 22050 Hz / 512 by default.
    pub polyphony_guard_s: f64,
    /// Magnitude range of the whole-scene pitch augmentation (integers).
    pub scene_pitch_range: (i32, i32),
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            duration_s: 30.0,
            sample_rate: SCENE_RATE,
            polyphony: 3,
            snr_db: (-15.0, 15.0),
            pitch_semitones: (-3.0, 3.0),
            stretch_ratio: (0.8, 1.15),
            onset_mean_fraction: 0.5,
            onset_std_fraction: 1.0 / 6.0,
            max_onset_retries: 50,
            background_attenuation_db: -6.0,
            polyphony_guard_s: 512.0 / 22_050.0,
            scene_pitch_range: (1, 6),
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        let ordered = |(a, b): (f64, f64)| a <= b;
        if !(self.duration_s > 0.0) || self.sample_rate == 0 || self.polyphony == 0 {
            return Err(invalid("duration, sample rate, and polyphony must be positive"));
        }
        if !ordered(self.snr_db) || !ordered(self.pitch_semitones) || !ordered(self.stretch_ratio) {
            return Err(invalid("parameter ranges must be ordered (low, high)"));
        }
        if self.stretch_ratio.0 <= 0.0 || self.pitch_semitones.0 < -12.0 || self.pitch_semitones.1 > 12.0 {
            return Err(invalid("stretch must be positive and pitch within +-12 semitones"));
        }
        let (lo, hi) = self.scene_pitch_range;
        if lo < 1 || hi < lo || hi > 12 {
            return Err(invalid("scene pitch range must satisfy 1 <= low <= high <= 12"));
        }
        Ok(())
    }

    fn n_samples(&self) -> usize {
        (self.duration_s * f64::from(self.sample_rate)).round() as usize
    }
}

/// One foreground event scheduled into a scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventPlacement {
    pub event_class: String,
    pub entry_id: usize,
    pub source_id: String,
    pub gain_variant_db: f64,
    pub onset_sample: usize,
    pub onset_s: f64,
    /// Length in samples after stretching.
    pub length: usize,
    pub pitch_semitones: f64,
    pub stretch_ratio: f64,
    pub snr_db: f64,
}

impl EventPlacement {
    pub fn offset_sample(&self) -> usize {
        self.onset_sample + self.length
    }
}

/// An event that could not be placed without breaking the polyphony cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedEvent {
    pub event_class: String,
    pub entry_id: usize,
    pub reason: String,
}

/// Every random draw for one scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenePlan {
    pub scene_class: String,
    pub background_id: String,
    pub seed: u64,
    pub duration_s: f64,
    pub sample_rate: u32,
    pub background_attenuation_db: f64,
    pub requested_events: usize,
    pub placements: Vec<EventPlacement>,
    pub dropped: Vec<DroppedEvent>,
}

/// Number of events for a scene: uniform in `[1, (E + 1) * 3]` where `E`
/// is the number of event classes allowed in the scene.
pub fn draw_event_count<R: Rng>(scene_class: &str, ontology: &SceneOntology, rng: &mut R) -> Result<usize> {
    let e = ontology.compatible_events(scene_class)?.len();
    Ok(rng.gen_range(1..=max_event_count(e)))
}

pub fn max_event_count(compatible_classes: usize) -> usize {
    (compatible_classes + 1) * 3
}

fn draw_uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

/// Normal draw restricted to `[0, upper]`.
fn truncated_normal<R: Rng>(rng: &mut R, mean: f64, std: f64, upper: f64) -> f64 {
    if upper <= 0.0 {
        return 0.0;
    }
    if std > 0.0 {
        let normal = Normal::new(mean, std).expect("positive std");
        for _ in 0..1000 {
            let x = normal.sample(rng);
            if (0.0..=upper).contains(&x) {
                return x;
            }
        }
    }
    rng.gen_range(0.0..=upper)
}

/// Would adding `[start, end)` exceed `cap` concurrent intervals?
fn exceeds_cap(existing: &[(usize, usize)], start: usize, end: usize, cap: usize) -> bool {
    let mut points: Vec<(usize, i32)> = Vec::new();
    for &(a, b) in existing {
        if a < end && start < b {
            points.push((a.max(start), 1));
            points.push((b.min(end), -1));
        }
    }
    points.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.cmp(&y.1)));
    let mut cur = 1i32;
    for (_, d) in points {
        cur += d;
        if cur > cap as i32 {
            return true;
        }
    }
    false
}

/// Plans a scene with an event count drawn from the scene's range.
pub fn plan_scene(
    scene_class: &str,
    background_id: &str,
    ontology: &SceneOntology,
    corpus: &EventCorpus,
    params: &SynthParams,
    seed: u64,
) -> Result<ScenePlan> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = draw_event_count(scene_class, ontology, &mut rng)?;
    plan_with_rng(scene_class, background_id, ontology, corpus, params, seed, n, &mut rng)
}

/// Plans a scene with exactly `n_events` requested events.
pub fn plan_scene_with_count(
    scene_class: &str,
    background_id: &str,
    ontology: &SceneOntology,
    corpus: &EventCorpus,
    params: &SynthParams,
    seed: u64,
    n_events: usize,
) -> Result<ScenePlan> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    plan_with_rng(scene_class, background_id, ontology, corpus, params, seed, n_events, &mut rng)
}

#[allow(clippy::too_many_arguments)]
fn plan_with_rng(
    scene_class: &str,
    background_id: &str,
    ontology: &SceneOntology,
    corpus: &EventCorpus,
    params: &SynthParams,
    seed: u64,
    n_events: usize,
    rng: &mut ChaCha8Rng,
) -> Result<ScenePlan> {
    params.validate()?;
    let classes = ontology.compatible_events(scene_class)?;
    let pools: Vec<Vec<&super::CorpusEntry>> = classes.iter().map(|c| corpus.entries_for(c)).collect();
    if let Some(i) = pools.iter().position(Vec::is_empty) {
        return Err(invalid(format!("corpus has no entries for `{}`", classes[i])));
    }
    if let Some(e) = pools.iter().flatten().find(|e| e.clip.sample_rate() != params.sample_rate) {
        return Err(Error::RateMismatch(e.clip.sample_rate(), params.sample_rate));
    }

    let rate = f64::from(params.sample_rate);
    let total = params.n_samples();
    let guard = (params.polyphony_guard_s * rate).ceil() as usize;
    let mean = params.onset_mean_fraction * params.duration_s;
    let std = params.onset_std_fraction * params.duration_s;

    let mut placements = Vec::new();
    let mut occupied: Vec<(usize, usize)> = Vec::new();
    let mut dropped = Vec::new();
    for _ in 0..n_events {
        let class_idx = rng.gen_range(0..classes.len());
        let entry = *pools[class_idx].choose(rng).expect("non-empty pool");
        let pitch = draw_uniform(rng, params.pitch_semitones);
        let stretch = draw_uniform(rng, params.stretch_ratio);
        let snr = draw_uniform(rng, params.snr_db);
        let length = ((entry.clip.len() as f64 * stretch).round() as usize).max(1);
        if length > total {
            dropped.push(DroppedEvent {
                event_class: entry.event_class.clone(),
                entry_id: entry.id,
                reason: "event longer than scene".into(),
            });
            continue;
        }
        let upper_s = (total - length) as f64 / rate;
        let mut placed = None;
        for _ in 0..params.max_onset_retries.max(1) {
            let onset = truncated_normal(rng, mean, std, upper_s);
            let start = ((onset * rate).round() as usize).min(total - length);
            if !exceeds_cap(&occupied, start, start + length + guard, params.polyphony) {
                placed = Some(start);
                break;
            }
        }
        let Some(start) = placed else {
            log::warn!(
                "dropping `{}` from {scene_class} scene (seed {seed}): polyphony cap",
                entry.event_class
            );
            dropped.push(DroppedEvent {
                event_class: entry.event_class.clone(),
                entry_id: entry.id,
                reason: format!("no onset within polyphony {} after retries", params.polyphony),
            });
            continue;
        };
        occupied.push((start, start + length + guard));
        placements.push(EventPlacement {
            event_class: entry.event_class.clone(),
            entry_id: entry.id,
            source_id: entry.source_id.clone(),
            gain_variant_db: entry.gain_db,
            onset_sample: start,
            onset_s: start as f64 / rate,
            length,
            pitch_semitones: pitch,
            stretch_ratio: stretch,
            snr_db: snr,
        });
    }

    Ok(ScenePlan {
        scene_class: scene_class.to_string(),
        background_id: background_id.to_string(),
        seed,
        duration_s: params.duration_s,
        sample_rate: params.sample_rate,
        background_attenuation_db: params.background_attenuation_db,
        requested_events: n_events,
        placements,
        dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::annotation::max_concurrency;
    use crate::synth::test_util::tiny_corpus;

    #[test]
    fn event_count_ranges() {
        let o = SceneOntology::paper();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (scene, hi) in [("bus", 21), ("office", 27)] {
            let draws: Vec<usize> = (0..2000)
                .map(|_| draw_event_count(scene, &o, &mut rng).unwrap())
                .collect();
            assert!(draws.iter().all(|&n| (1..=hi).contains(&n)));
            assert_eq!(*draws.iter().max().unwrap(), hi);
            assert_eq!(*draws.iter().min().unwrap(), 1);
        }
        assert_eq!(max_event_count(1), 6);
        assert!(draw_event_count("nowhere", &o, &mut rng).is_err());
    }

    #[test]
    fn same_seed_same_plan() {
        let (o, corpus) = tiny_corpus();
        let p = SynthParams {
            duration_s: 5.0,
            ..SynthParams::default()
        };
        let a = plan_scene("park", "bg0", &o, &corpus, &p, 42).unwrap();
        let b = plan_scene("park", "bg0", &o, &corpus, &p, 42).unwrap();
        assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
        let c = plan_scene("park", "bg0", &o, &corpus, &p, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn placements_respect_ranges_and_compatibility() {
        let (o, corpus) = tiny_corpus();
        let p = SynthParams {
            duration_s: 5.0,
            ..SynthParams::default()
        };
        for seed in 0..20 {
            let plan = plan_scene("office", "bg", &o, &corpus, &p, seed).unwrap();
            assert_eq!(plan.placements.len() + plan.dropped.len(), plan.requested_events);
            for pl in &plan.placements {
                assert!(o.is_compatible("office", &pl.event_class));
                assert!((-3.0..=3.0).contains(&pl.pitch_semitones));
                assert!((0.8..=1.15).contains(&pl.stretch_ratio));
                assert!((-15.0..=15.0).contains(&pl.snr_db));
                assert!(pl.offset_sample() <= 5 * 44_100);
            }
        }
    }

    #[test]
    fn forced_crowding_keeps_polyphony_cap() {
        let (o, corpus) = tiny_corpus();
        let p = SynthParams {
            duration_s: 5.0,
            ..SynthParams::default()
        };
        let plan = plan_scene_with_count("park", "bg", &o, &corpus, &p, 9, 50).unwrap();
        let intervals = plan
            .placements
            .iter()
            .map(|pl| (pl.onset_sample as f64, pl.offset_sample() as f64));
        assert!(max_concurrency(intervals) <= 3);
        assert!(!plan.dropped.is_empty());
        assert_eq!(plan.placements.len() + plan.dropped.len(), 50);
    }

    #[test]
    fn cap_check_counts_candidate() {
        let existing = [(0, 10), (5, 15), (8, 20)];
        assert!(exceeds_cap(&existing, 9, 12, 3));
        assert!(!exceeds_cap(&existing, 15, 30, 3));
        assert!(!exceeds_cap(&existing, 20, 30, 1));
    }
}
