use rand::Rng;

use super::annotation::{round6, AnnotatedEvent, AnnotationTrack};
use super::{EventCorpus, ScenePlan};
use crate::audio::{
    amplitude_to_db, apply_gain, db_to_amplitude, mix_into, peak_normalize, pitch_shift, rms, time_stretch,
    AudioClip,
};
use crate::error::{invalid, Error, Result};

/// A rendered scene together with the per-event quantities needed to audit
/// it.
#[derive(Debug, Clone)]
pub struct RenderedScene {
    pub audio: AudioClip,
    pub annotation: AnnotationTrack,
    /// Attenuated background before any event was mixed in.
    pub background: Vec<f64>,
    /// Event stems after pitch/stretch/gain, with their start sample.
    pub stems: Vec<(usize, Vec<f64>)>,
    /// Measured event-to-background SNR per placement.
    pub realized_snr_db: Vec<f64>,
}

/// Gain (dB) that brings `event` to `target_snr_db` relative to the
/// background RMS over the samples the event covers. A silent span falls
/// back to the RMS of the whole background.
pub fn snr_gain(event: &[f64], background: &[f64], start: usize, target_snr_db: f64) -> Result<f64> {
    let event_rms = rms(event);
    if event_rms == 0.0 {
        return Err(invalid("event stem is silent"));
    }
    let end = (start + event.len()).min(background.len());
    let span = background.get(start..end).unwrap_or(&[]);
    let mut bg_rms = rms(span);
    if bg_rms == 0.0 {
        bg_rms = rms(background);
    }
    if bg_rms == 0.0 {
        return Err(invalid("background is silent"));
    }
    Ok(target_snr_db - amplitude_to_db(event_rms / bg_rms))
}

/// Renders the plan and returns the normalized mix with its annotation.
pub fn render_scene(plan: &ScenePlan, corpus: &EventCorpus, background: &AudioClip) -> Result<(AudioClip, AnnotationTrack)> {
    let r = render_scene_detailed(plan, corpus, background)?;
    Ok((r.audio, r.annotation))
}

pub fn render_scene_detailed(plan: &ScenePlan, corpus: &EventCorpus, background: &AudioClip) -> Result<RenderedScene> {
    if background.sample_rate() != plan.sample_rate {
        return Err(Error::RateMismatch(background.sample_rate(), plan.sample_rate));
    }
    let total = (plan.duration_s * f64::from(plan.sample_rate)).round() as usize;
    if background.len() < total {
        return Err(invalid(format!(
            "background `{}` is {:.3} s, scene needs {:.3} s",
            plan.background_id,
            background.duration_s(),
            plan.duration_s
        )));
    }
    let bg = AudioClip::new(background.samples()[..total].to_vec(), plan.sample_rate)?;
    let bg = apply_gain(&bg, plan.background_attenuation_db).into_samples();
    let mut mix = bg.clone();
    let rate = f64::from(plan.sample_rate);

    let mut stems = Vec::with_capacity(plan.placements.len());
    let mut realized = Vec::with_capacity(plan.placements.len());
    let mut events = Vec::with_capacity(plan.placements.len());
    for p in &plan.placements {
        let entry = corpus.get(p.entry_id)?;
        if entry.event_class != p.event_class {
            return Err(invalid(format!("corpus entry {} is not `{}`", p.entry_id, p.event_class)));
        }
        let shifted = pitch_shift(&entry.clip, p.pitch_semitones)?;
        let stretched = time_stretch(&shifted, p.stretch_ratio)?;
        if stretched.len() != p.length {
            return Err(invalid(format!(
                "stretched length {} differs from planned {}",
                stretched.len(),
                p.length
            )));
        }
        let gain_db = snr_gain(stretched.samples(), &bg, p.onset_sample, p.snr_db)?;
        let g = db_to_amplitude(gain_db);
        let stem: Vec<f64> = stretched.samples().iter().map(|x| x * g).collect();
        mix_into(&mut mix, &stem, p.onset_sample, 1.0)?;

        let span = &bg[p.onset_sample..p.offset_sample()];
        let span_rms = if rms(span) > 0.0 { rms(span) } else { rms(&bg) };
        realized.push(amplitude_to_db(rms(&stem) / span_rms));
        events.push(AnnotatedEvent {
            onset_s: round6(p.onset_sample as f64 / rate),
            offset_s: round6(p.offset_sample() as f64 / rate),
            label: p.event_class.clone(),
        });
        stems.push((p.onset_sample, stem));
    }

    let audio = peak_normalize(&AudioClip::new(mix, plan.sample_rate)?);
    Ok(RenderedScene {
        audio,
        annotation: AnnotationTrack::new(plan.scene_class.clone(), plan.duration_s, events),
        background: bg,
        stems,
        realized_snr_db: realized,
    })
}

/// One whole-scene pitch-shifted copy.
#[derive(Debug, Clone)]
pub struct PitchVariant {
    pub semitones: i32,
    pub audio: AudioClip,
    pub annotation: AnnotationTrack,
}

/// Produces two pitch-shifted copies of a rendered scene: one shifted up
/// and one down by an integer number of semitones drawn uniformly from
/// `range`. Annotations are copied unchanged.
pub fn augment_scene_pitch<R: Rng>(
    audio: &AudioClip,
    annotation: &AnnotationTrack,
    range: (i32, i32),
    rng: &mut R,
) -> Result<[PitchVariant; 2]> {
    let (lo, hi) = range;
    if lo < 1 || hi < lo {
        return Err(invalid("scene pitch range must satisfy 1 <= low <= high"));
    }
    let up = rng.gen_range(lo..=hi);
    let down = -rng.gen_range(lo..=hi);
    let make = |s: i32| -> Result<PitchVariant> {
        Ok(PitchVariant {
            semitones: s,
            audio: peak_normalize(&pitch_shift(audio, f64::from(s))?),
            annotation: annotation.clone(),
        })
    };
    Ok([make(up)?, make(down)?])
}
