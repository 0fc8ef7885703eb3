//! Procedural event and background generator.
//!
//! Produces class-distinct synthetic recordings (chirps, tone bursts,
//! harmonic babble, filtered noise) for the small three-scene ontology, so
//! the full pipeline can run without any external audio.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::corpus::{BackgroundRow, SourceClip, SourceRow};
use super::SceneOntology;
use crate::audio::{peak_normalize, write_wav, AudioClip, WavFormat, SCENE_RATE};
use crate::digest::derive_seed;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProceduralConfig {
    pub sources_per_event: usize,
    pub backgrounds_per_scene: usize,
    pub background_duration_s: f64,
    pub seed: u64,
}

impl Default for ProceduralConfig {
    fn default() -> Self {
        Self {
            sources_per_event: 4,
            backgrounds_per_scene: 6,
            background_duration_s: 6.0,
            seed: 2019,
        }
    }
}

/// A background recording; its id is also its recording location.
#[derive(Debug, Clone)]
pub struct Background {
    pub background_id: String,
    pub scene_class: String,
    pub clip: AudioClip,
}

#[derive(Debug, Clone)]
pub struct ProceduralCorpus {
    pub ontology: SceneOntology,
    pub sources: Vec<SourceClip>,
    pub backgrounds: Vec<Background>,
}

/// Paths written by [`ProceduralCorpus::write`].
#[derive(Debug, Clone)]
pub struct ProceduralPaths {
    pub ontology: PathBuf,
    pub events_manifest: PathBuf,
    pub backgrounds_manifest: PathBuf,
}

struct Osc {
    rate: f64,
}

impl Osc {
    fn t(&self, i: usize) -> f64 {
        i as f64 / self.rate
    }
}

/// One-pole low-pass filtered white noise.
fn lowpass_noise<R: Rng>(rng: &mut R, n: usize, cutoff_hz: f64, rate: f64) -> Vec<f64> {
    let a = (-2.0 * PI * cutoff_hz / rate).exp();
    let mut y = 0.0;
    (0..n)
        .map(|_| {
            let x: f64 = rng.gen_range(-1.0..1.0);
            y = (1.0 - a) * x + a * y;
            y
        })
        .collect()
}

/// Difference of two low-passes: a crude band-pass.
fn bandpass_noise<R: Rng>(rng: &mut R, n: usize, lo: f64, hi: f64, rate: f64) -> Vec<f64> {
    let white: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let (a_lo, a_hi) = ((-2.0 * PI * lo / rate).exp(), (-2.0 * PI * hi / rate).exp());
    let (mut y_lo, mut y_hi) = (0.0, 0.0);
    white
        .iter()
        .map(|&x| {
            y_lo = (1.0 - a_lo) * x + a_lo * y_lo;
            y_hi = (1.0 - a_hi) * x + a_hi * y_hi;
            y_hi - y_lo
        })
        .collect()
}

fn decay(t: f64, tau: f64) -> f64 {
    (-t / tau).exp()
}

fn event_samples<R: Rng>(class: &str, rng: &mut R, rate: f64) -> Result<Vec<f64>> {
    let o = Osc { rate };
    let len_s: f64 = rng.gen_range(0.35..1.1);
    let n = (len_s * rate) as usize;
    let mut x = vec![0.0; n];
    match class {
        "birdsong" => {
            // Rising high chirps.
            let f0 = rng.gen_range(2_600.0..3_600.0);
            let sweep = rng.gen_range(700.0..1_400.0);
            let chirp_s = rng.gen_range(0.06..0.11);
            let gap_s = rng.gen_range(0.03..0.08);
            let period = chirp_s + gap_s;
            for (i, v) in x.iter_mut().enumerate() {
                let t = o.t(i);
                let local = t % period;
                if local < chirp_s {
                    let phase = 2.0 * PI * (f0 * local + 0.5 * sweep / chirp_s * local * local);
                    *v = (PI * local / chirp_s).sin() * phase.sin();
                }
            }
        }
        "knock" => {
            // Short decaying low-mid thuds.
            let f = rng.gen_range(180.0..280.0);
            let period = rng.gen_range(0.12..0.2);
            let noise = bandpass_noise(rng, n, 300.0, 1_500.0, rate);
            for (i, v) in x.iter_mut().enumerate() {
                let local = o.t(i) % period;
                *v = decay(local, 0.02) * ((2.0 * PI * f * local).sin() + 0.6 * noise[i]);
            }
        }
        "phone" => {
            // Dual-tone ring bursts.
            let f1 = rng.gen_range(900.0..1_050.0);
            let f2 = f1 * 1.5;
            let on = rng.gen_range(0.1..0.2);
            let period = on + rng.gen_range(0.05..0.1);
            for (i, v) in x.iter_mut().enumerate() {
                let t = o.t(i);
                if t % period < on {
                    *v = 0.5 * ((2.0 * PI * f1 * t).sin() + (2.0 * PI * f2 * t).sin());
                }
            }
        }
        "speech" => {
            // Harmonic voice with syllabic amplitude modulation.
            let f0 = rng.gen_range(110.0..220.0);
            let syll = rng.gen_range(3.5..5.5);
            let formant = rng.gen_range(500.0..900.0);
            for (i, v) in x.iter_mut().enumerate() {
                let t = o.t(i);
                let vib = 1.0 + 0.03 * (2.0 * PI * 5.0 * t).sin();
                let mut s = 0.0;
                for h in 1..=12 {
                    let fh = f0 * h as f64;
                    let w = (-((fh - formant) / 400.0).powi(2)).exp() + 0.15 / h as f64;
                    s += w * (2.0 * PI * fh * vib * t).sin();
                }
                *v = s * (0.5 - 0.5 * (2.0 * PI * syll * t).cos());
            }
        }
        "announcement" => {
            // Two bell chimes, the second a third lower.
            let f = rng.gen_range(600.0..720.0);
            let half = n / 2;
            for (i, v) in x.iter_mut().enumerate() {
                let (t, ff) = if i < half { (o.t(i), f) } else { (o.t(i - half), f * 0.8) };
                *v = decay(t, 0.25)
                    * ((2.0 * PI * ff * t).sin() + 0.4 * (2.0 * PI * 2.76 * ff * t).sin());
            }
        }
        "footsteps" => {
            // Low thumps with a gritty noise layer.
            let period = rng.gen_range(0.25..0.4);
            let f = rng.gen_range(70.0..120.0);
            let grit = bandpass_noise(rng, n, 1_500.0, 5_000.0, rate);
            for (i, v) in x.iter_mut().enumerate() {
                let local = o.t(i) % period;
                *v = decay(local, 0.04) * ((2.0 * PI * f * local).sin() + 0.4 * grit[i]);
            }
        }
        other => return Err(invalid(format!("no procedural generator for event `{other}`"))),
    }
    // Short fades avoid clicks; a little leading silence exercises trimming.
    let fade = (0.005 * rate) as usize;
    for i in 0..fade.min(n / 2) {
        let g = i as f64 / fade as f64;
        x[i] *= g;
        x[n - 1 - i] *= g;
    }
    let lead = rng.gen_range(0..(0.03 * rate) as usize);
    let mut out = vec![0.0; lead];
    out.extend(x);
    Ok(out)
}

fn background_samples<R: Rng>(scene: &str, rng: &mut R, duration_s: f64, rate: f64) -> Result<Vec<f64>> {
    let n = (duration_s * rate).round() as usize;
    let o = Osc { rate };
    let x = match scene {
        "office" => {
            // Air-conditioning hiss plus mains hum.
            let hum = rng.gen_range(48.0..62.0);
            let top = rng.gen_range(2_000.0..3_000.0);
            let hiss = bandpass_noise(rng, n, 200.0, top, rate);
            (0..n)
                .map(|i| {
                    let t = o.t(i);
                    let h = (1..=4).map(|k| (2.0 * PI * hum * k as f64 * t).sin() / k as f64).sum::<f64>();
                    0.6 * hiss[i] + 0.05 * h
                })
                .collect()
        }
        "park" => {
            // Slowly gusting broadband wind over a soft low bed.
            let gust = rng.gen_range(0.15..0.35);
            let wind = bandpass_noise(rng, n, 800.0, 6_000.0, rate);
            let bed = lowpass_noise(rng, n, 300.0, rate);
            (0..n)
                .map(|i| {
                    let t = o.t(i);
                    let g = 0.6 + 0.4 * (2.0 * PI * gust * t).sin();
                    g * wind[i] + 0.5 * bed[i]
                })
                .collect()
        }
        "tubestation" => {
            // Heavy low rumble with a mid-band crowd murmur.
            let cutoff = rng.gen_range(90.0..140.0);
            let rumble = lowpass_noise(rng, n, cutoff, rate);
            let crowd = bandpass_noise(rng, n, 300.0, 1_200.0, rate);
            let wobble = rng.gen_range(0.3..0.8);
            (0..n)
                .map(|i| {
                    let t = o.t(i);
                    4.0 * rumble[i] + 0.4 * crowd[i] * (1.0 + 0.3 * (2.0 * PI * wobble * t).sin())
                })
                .collect()
        }
        other => return Err(invalid(format!("no procedural generator for scene `{other}`"))),
    };
    Ok(x)
}

/// Generates event sources and backgrounds for the desk ontology.
pub fn generate(config: &ProceduralConfig) -> Result<ProceduralCorpus> {
    let ontology = SceneOntology::desk();
    let mut sources = Vec::new();
    for (ci, class) in ontology.events.iter().enumerate() {
        for s in 0..config.sources_per_event {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, (ci * 1_000 + s) as u64));
            // Every third source is recorded at 48 kHz so preparation has to resample.
            let rate = if s % 3 == 2 { 48_000 } else { SCENE_RATE };
            let samples = event_samples(class, &mut rng, f64::from(rate))?;
            let clip = AudioClip::new(samples, rate)?;
            sources.push(SourceClip {
                event_class: class.clone(),
                source_id: format!("{class}_{s:02}"),
                clip: peak_normalize(&clip),
            });
        }
    }
    let mut backgrounds = Vec::new();
    for (si, scene) in ontology.scenes.iter().enumerate() {
        for loc in 0..config.backgrounds_per_scene {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed ^ 0xB6, (si * 1_000 + loc) as u64));
            let samples = background_samples(scene, &mut rng, config.background_duration_s, f64::from(SCENE_RATE))?;
            let clip = peak_normalize(&AudioClip::new(samples, SCENE_RATE)?);
            backgrounds.push(Background {
                background_id: format!("{scene}_{loc:02}"),
                scene_class: scene.clone(),
                clip,
            });
        }
    }
    Ok(ProceduralCorpus {
        ontology,
        sources,
        backgrounds,
    })
}

impl ProceduralCorpus {
    /// Writes WAVs, `events.csv`, `backgrounds.csv`, and `ontology.toml`
    /// under `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<ProceduralPaths> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir.join("events"))?;
        std::fs::create_dir_all(dir.join("backgrounds"))?;
        let ontology = dir.join("ontology.toml");
        std::fs::write(&ontology, self.ontology.to_toml_string())?;

        let events_manifest = dir.join("events.csv");
        let mut w = csv::Writer::from_path(&events_manifest)?;
        for s in &self.sources {
            let rel = PathBuf::from("events").join(format!("{}.wav", s.source_id));
            write_wav(dir.join(&rel), &s.clip, WavFormat::Float32)?;
            w.serialize(SourceRow {
                event_class: s.event_class.clone(),
                source_id: s.source_id.clone(),
                path: rel,
            })?;
        }
        w.flush()?;

        let backgrounds_manifest = dir.join("backgrounds.csv");
        let mut w = csv::Writer::from_path(&backgrounds_manifest)?;
        for b in &self.backgrounds {
            let rel = PathBuf::from("backgrounds").join(format!("{}.wav", b.background_id));
            write_wav(dir.join(&rel), &b.clip, WavFormat::Float32)?;
            w.serialize(BackgroundRow {
                background_id: b.background_id.clone(),
                scene_class: b.scene_class.clone(),
                path: rel,
            })?;
        }
        w.flush()?;
        Ok(ProceduralPaths {
            ontology,
            events_manifest,
            backgrounds_manifest,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::corpus::{load_sources, read_background_manifest, read_source_manifest};

    fn small() -> ProceduralConfig {
        ProceduralConfig {
            sources_per_event: 3,
            backgrounds_per_scene: 2,
            background_duration_s: 1.0,
            seed: 1,
        }
    }

    #[test]
    fn generates_every_class_and_location() {
        let c = generate(&small()).unwrap();
        assert_eq!(c.sources.len(), 18);
        assert_eq!(c.backgrounds.len(), 6);
        assert!(c.sources.iter().any(|s| s.clip.sample_rate() == 48_000));
        for s in &c.sources {
            assert!(s.clip.samples().iter().all(|x| x.is_finite()));
            assert!((s.clip.peak() - 1.0).abs() < 1e-12);
        }
        for b in &c.backgrounds {
            assert_eq!(b.clip.len(), 44_100);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.sources[4].clip, b.sources[4].clip);
        assert_eq!(a.backgrounds[3].clip, b.backgrounds[3].clip);
    }

    #[test]
    fn written_manifests_load_back() {
        let dir = tempfile::tempdir().unwrap();
        let c = generate(&small()).unwrap();
        let paths = c.write(dir.path()).unwrap();
        let rows = read_source_manifest(&paths.events_manifest).unwrap();
        assert_eq!(rows.len(), 18);
        assert_eq!(load_sources(&rows).unwrap().len(), 18);
        let bgs = read_background_manifest(&paths.backgrounds_manifest).unwrap();
        assert_eq!(bgs.len(), 6);
        assert_eq!(SceneOntology::load(&paths.ontology).unwrap(), SceneOntology::desk());
    }
}
