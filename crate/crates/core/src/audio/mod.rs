//! Mono audio primitives.
//!
//! Everything here is a pure function of its inputs: clips are immutable
//! values and every operation returns a fresh [`AudioClip`].

mod resample;
mod stft;
mod vocoder;
mod wav;

pub use resample::{resample, resample_by_ratio};
pub use stft::{istft, stft, Padding};
pub use vocoder::{pitch_shift, time_stretch, VOCODER_FFT, VOCODER_HOP};
pub use wav::{read_wav, write_wav, WavFormat};

use crate::error::{invalid, Error, Result};

/// Sample rate of rendered scenes and of the prepared event corpus.
pub const SCENE_RATE: u32 = 44_100;

/// A mono buffer of samples with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyAudio);
        }
        if sample_rate == 0 {
            return Err(invalid("sample rate must be positive"));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn silence(duration_s: f64, sample_rate: u32) -> Result<Self> {
        let n = (duration_s * f64::from(sample_rate)).round() as usize;
        Self::new(vec![0.0; n], sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// Always false for a constructed clip; provided for API symmetry.
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    pub fn peak(&self) -> f64 {
        peak(&self.samples)
    }

    pub fn rms(&self) -> f64 {
        rms(&self.samples)
    }

    pub(crate) fn with_samples(&self, samples: Vec<f64>) -> Result<Self> {
        Self::new(samples, self.sample_rate)
    }
}

pub fn peak(samples: &[f64]) -> f64 {
    samples.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub fn rms(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    (samples.iter().map(|x| x * x).sum::<f64>() / samples.len() as f64).sqrt()
}

pub fn db_to_amplitude(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

pub fn amplitude_to_db(amplitude: f64) -> f64 {
    20.0 * amplitude.log10()
}

/// Scales the clip so that its largest magnitude is exactly 1. All-zero
/// clips are returned unchanged.
pub fn peak_normalize(clip: &AudioClip) -> AudioClip {
    let p = clip.peak();
    if p == 0.0 {
        return clip.clone();
    }
    let samples = clip
        .samples
        .iter()
        .map(|&x| {
            // Keep the extreme samples at exactly +-1.
            if x.abs() == p {
                x.signum()
            } else {
                x / p
            }
        })
        .collect();
    AudioClip {
        samples,
        sample_rate: clip.sample_rate,
    }
}

/// Drops everything before the first sample whose magnitude exceeds
/// `peak * 10^(threshold_db / 20)`.
pub fn trim_leading_silence(clip: &AudioClip, threshold_db: f64) -> Result<AudioClip> {
    if !(threshold_db < 0.0) {
        return Err(invalid("trim threshold must be negative dB"));
    }
    let threshold = clip.peak() * db_to_amplitude(threshold_db);
    let start = clip
        .samples
        .iter()
        .position(|x| x.abs() > threshold)
        .ok_or(Error::NoSignal)?;
    clip.with_samples(clip.samples[start..].to_vec())
}

/// Multiplies every sample by `10^(gain_db / 20)`. No clipping.
pub fn apply_gain(clip: &AudioClip, gain_db: f64) -> AudioClip {
    let g = db_to_amplitude(gain_db);
    AudioClip {
        samples: clip.samples.iter().map(|x| x * g).collect(),
        sample_rate: clip.sample_rate,
    }
}

/// Adds the gain-scaled overlay into a copy of `base`, starting at sample
/// `round(onset_s * rate)`.
pub fn mix_at(base: &AudioClip, overlay: &AudioClip, onset_s: f64, gain_db: f64) -> Result<AudioClip> {
    if base.sample_rate != overlay.sample_rate {
        return Err(Error::RateMismatch(base.sample_rate, overlay.sample_rate));
    }
    if !(onset_s >= 0.0) {
        return Err(invalid("onset must be non-negative"));
    }
    let start = (onset_s * f64::from(base.sample_rate)).round() as usize;
    let mut out = base.clone();
    mix_into(&mut out.samples, &overlay.samples, start, db_to_amplitude(gain_db))?;
    Ok(out)
}

pub(crate) fn mix_into(base: &mut [f64], overlay: &[f64], start: usize, gain: f64) -> Result<()> {
    let end = start
        .checked_add(overlay.len())
        .filter(|&e| e <= base.len())
        .ok_or(Error::OutOfBounds)?;
    for (b, o) in base[start..end].iter_mut().zip(overlay) {
        *b += o * gain;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clip(samples: &[f64]) -> AudioClip {
        AudioClip::new(samples.to_vec(), 44_100).unwrap()
    }

    #[test]
    fn construction_rejects_empty_and_zero_rate() {
        assert!(matches!(AudioClip::new(vec![], 44_100), Err(Error::EmptyAudio)));
        assert!(AudioClip::new(vec![0.0], 0).is_err());
    }

    #[test]
    fn peak_normalize_examples() {
        assert_eq!(peak_normalize(&clip(&[0.5, -0.25])).samples(), &[1.0, -0.5]);
        assert_eq!(peak_normalize(&clip(&[0.0, 0.0])).samples(), &[0.0, 0.0]);
        assert_eq!(peak_normalize(&clip(&[-0.2, 0.1])).samples(), &[-1.0, 0.5]);
    }

    #[test]
    fn trim_examples() {
        let out = trim_leading_silence(&clip(&[0.0, 0.0, 0.0, 0.9, 0.1]), -40.0).unwrap();
        assert_eq!(out.samples(), &[0.9, 0.1]);

        let c = clip(&[0.3, 0.0, 0.2]);
        assert_eq!(trim_leading_silence(&c, -40.0).unwrap(), c);

        assert!(matches!(
            trim_leading_silence(&clip(&[0.0; 8]), -40.0),
            Err(Error::NoSignal)
        ));
        assert!(trim_leading_silence(&c, 0.0).is_err());
    }

    #[test]
    fn trim_ramp_matches_scan() {
        let ramp: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
        let out = trim_leading_silence(&clip(&ramp), -20.0).unwrap();
        let first = ramp.iter().position(|x| x.abs() > 0.1).unwrap();
        assert_eq!(out.samples()[0], ramp[first]);
        assert_eq!(out.len(), 100 - first);
    }

    #[test]
    fn gain_examples() {
        assert!((apply_gain(&clip(&[0.1]), 20.0).samples()[0] - 1.0).abs() < 1e-12);
        assert_eq!(apply_gain(&clip(&[0.5]), 0.0).samples(), &[0.5]);
        let v = apply_gain(&clip(&[0.2]), -10.0).samples()[0];
        assert!((v - 0.2 * 10f64.powf(-0.5)).abs() < 1e-12);
        assert!((v - 0.06325).abs() < 1e-5);
    }

    #[test]
    fn mix_examples() {
        let base = AudioClip::silence(0.001, 44_100).unwrap();
        let out = mix_at(&base, &clip(&[1.0, 1.0]), 0.0, 0.0).unwrap();
        assert_eq!(&out.samples()[..3], &[1.0, 1.0, 0.0]);

        let base = AudioClip::silence(2.0, 44_100).unwrap();
        let out = mix_at(&base, &clip(&[0.5]), 1.0, 0.0).unwrap();
        let first = out.samples().iter().position(|&x| x != 0.0).unwrap();
        assert_eq!(first, 44_100);
    }

    #[test]
    fn mix_errors() {
        let base = AudioClip::silence(0.001, 44_100).unwrap();
        let other = AudioClip::new(vec![1.0], 22_050).unwrap();
        assert!(matches!(mix_at(&base, &other, 0.0, 0.0), Err(Error::RateMismatch(..))));
        let long = clip(&vec![1.0; 100]);
        assert!(matches!(mix_at(&base, &long, 0.0, 0.0), Err(Error::OutOfBounds)));
    }
}

#[cfg(test)]
pub(crate) mod test_util {
    use super::AudioClip;
    use rustfft::num_complex::Complex64;
    use rustfft::FftPlanner;

    pub fn sine(freq: f64, duration_s: f64, rate: u32, amp: f64) -> AudioClip {
        let n = (duration_s * f64::from(rate)).round() as usize;
        let w = 2.0 * std::f64::consts::PI * freq / f64::from(rate);
        AudioClip::new((0..n).map(|i| amp * (w * i as f64).sin()).collect(), rate).unwrap()
    }

    /// Frequency of the largest DFT bin of the Hann-windowed, 8x zero-padded
    /// signal.
    pub fn dominant_frequency(clip: &AudioClip) -> f64 {
        let x = clip.samples();
        let n = (x.len() * 8).next_power_of_two();
        let mut buf = vec![Complex64::default(); n];
        let len = x.len() as f64;
        for (i, &v) in x.iter().enumerate() {
            let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / len).cos();
            buf[i] = Complex64::new(v * w, 0.0);
        }
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let k = (1..n / 2)
            .max_by(|&a, &b| buf[a].norm().total_cmp(&buf[b].norm()))
            .unwrap();
        k as f64 * f64::from(clip.sample_rate()) / n as f64
    }
}
