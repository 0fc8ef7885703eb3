//! Phase-vocoder time stretching and pitch shifting.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use super::resample::resample_by_ratio;
use super::stft::{istft, stft, Padding};
use super::AudioClip;
use crate::error::{invalid, Result};

pub const VOCODER_FFT: usize = 2048;
pub const VOCODER_HOP: usize = 512;

fn wrap_phase(x: f64) -> f64 {
    x - 2.0 * PI * ((x + PI) / (2.0 * PI)).floor()
}

/// Stretches `x` so that it lasts `ratio` times as long, producing exactly
/// `out_len` samples.
fn stretch_samples(x: &[f64], ratio: f64, out_len: usize) -> Vec<f64> {
    let mut spec = stft(x, VOCODER_FFT, VOCODER_HOP, Padding::Zero);
    let n_frames = spec.len();
    let bins = VOCODER_FFT / 2 + 1;
    spec.push(vec![Complex64::default(); bins]);

    let advance: Vec<f64> = (0..bins)
        .map(|k| 2.0 * PI * k as f64 * VOCODER_HOP as f64 / VOCODER_FFT as f64)
        .collect();
    let mut phase: Vec<f64> = spec[0].iter().map(|c| c.arg()).collect();

    let step = 1.0 / ratio;
    let n_steps = (n_frames as f64 / step).ceil() as usize;
    let mut frames = Vec::with_capacity(n_steps);
    for s in 0..n_steps {
        let t = s as f64 * step;
        let left = t.floor() as usize;
        if left >= n_frames {
            break;
        }
        let alpha = t - left as f64;
        let (a, b) = (&spec[left], &spec[left + 1]);
        let frame: Vec<Complex64> = (0..bins)
            .map(|k| {
                let mag = (1.0 - alpha) * a[k].norm() + alpha * b[k].norm();
                Complex64::from_polar(mag, phase[k])
            })
            .collect();
        for k in 0..bins {
            let dphi = wrap_phase(b[k].arg() - a[k].arg() - advance[k]);
            phase[k] += advance[k] + dphi;
        }
        frames.push(frame);
    }
    istft(&frames, VOCODER_FFT, VOCODER_HOP, out_len)
}

/// Changes duration by `ratio` (output length `round(len * ratio)`) while
/// keeping pitch.
pub fn time_stretch(clip: &AudioClip, ratio: f64) -> Result<AudioClip> {
    if !(ratio > 0.0) || !ratio.is_finite() {
        return Err(invalid("stretch ratio must be positive"));
    }
    if ratio == 1.0 {
        return Ok(clip.clone());
    }
    let out_len = ((clip.len() as f64 * ratio).round() as usize).max(1);
    clip.with_samples(stretch_samples(clip.samples(), ratio, out_len))
}

/// Shifts pitch by `semitones` while keeping the sample count: a phase
/// vocoder stretch by `2^(semitones/12)` followed by band-limited
/// resampling back to the original length.
pub fn pitch_shift(clip: &AudioClip, semitones: f64) -> Result<AudioClip> {
    if !(semitones.abs() <= 12.0) {
        return Err(invalid("pitch shift limited to +-12 semitones"));
    }
    if semitones == 0.0 {
        return Ok(clip.clone());
    }
    let factor = 2f64.powf(semitones / 12.0);
    let n = clip.len();
    let stretched_len = ((n as f64 * factor).round() as usize).max(1);
    let stretched = stretch_samples(clip.samples(), factor, stretched_len);
    let ratio = n as f64 / stretched_len as f64;
    clip.with_samples(resample_by_ratio(&stretched, ratio, n))
}
