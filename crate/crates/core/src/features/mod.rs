//! Two-channel log-mel features and per-frame labels.
//!
//! Channel 0 holds the log-mel spectrogram, channel 1 the same spectrogram
//! after a centered moving average over time. Both are standardized per
//! band with statistics from the training portion of a fold.

pub mod container;
pub mod folds;
pub mod labels;
mod mel;
mod smooth;
pub mod standardize;

pub use folds::{make_folds, FoldRecord, FoldSplit};
pub use labels::{frames_covering, labels_from_annotation, LabelMatrix, Task};
pub use mel::{hz_to_mel, mel_edges, mel_filterbank, mel_to_hz};
pub use smooth::temporal_smooth;
pub use standardize::Standardizer;

use ndarray::{s, Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::audio::{resample, stft, AudioClip, Padding};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub sample_rate: u32,
    pub n_fft: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: Option<f64>,
    /// Moving-average length in frames for the smoothed channel (odd).
    pub smooth_window: usize,
    pub log_floor: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            sample_rate: 22_050,
            n_fft: 2048,
            hop: 512,
            n_mels: 128,
            fmin: 0.0,
            fmax: None,
            smooth_window: 21,
            log_floor: 1e-10,
        }
    }
}

impl FeatureConfig {
    pub fn frame_hop_s(&self) -> f64 {
        self.hop as f64 / f64::from(self.sample_rate)
    }

    /// Frames produced for `duration_s` seconds of audio.
    pub fn frames_for(&self, duration_s: f64) -> usize {
        (duration_s * f64::from(self.sample_rate)).round() as usize / self.hop + 1
    }
}

/// `frames x n_mels x 2` features; channel 0 raw, channel 1 smoothed.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    pub values: Array3<f32>,
    pub frame_hop_s: f64,
}

impl FeatureTensor {
    pub fn frames(&self) -> usize {
        self.values.dim().0
    }

    pub fn n_mels(&self) -> usize {
        self.values.dim().1
    }

    pub fn channel(&self, c: usize) -> Array2<f32> {
        self.values.slice(s![.., .., c]).to_owned()
    }
}

/// Magnitude STFT with reflect padding: `(1 + len / hop) x (n_fft / 2 + 1)`.
pub fn stft_magnitude(clip: &AudioClip, n_fft: usize, hop: usize) -> Array2<f64> {
    let frames = stft(clip.samples(), n_fft, hop, Padding::Reflect);
    let bins = n_fft / 2 + 1;
    let mut out = Array2::zeros((frames.len(), bins));
    for (f, frame) in frames.iter().enumerate() {
        for (k, c) in frame.iter().enumerate() {
            out[[f, k]] = c.norm();
        }
    }
    out
}

/// Natural log of mel-filtered power spectra plus `log_floor`, computed at
/// the clip's own sample rate.
pub fn log_mel(clip: &AudioClip, config: &FeatureConfig) -> Result<Array2<f64>> {
    let mag = stft_magnitude(clip, config.n_fft, config.hop);
    let power = mag.mapv(|m| m * m);
    let bank = mel_filterbank(config.n_mels, clip.sample_rate(), config.n_fft, config.fmin, config.fmax)?;
    let mel = power.dot(&bank.t());
    Ok(mel.mapv(|e| (e + config.log_floor).ln()))
}

/// Stacks two `frames x bands` maps into a two-channel tensor.
pub fn stack_channels(raw: &Array2<f64>, smoothed: &Array2<f64>, frame_hop_s: f64) -> Result<FeatureTensor> {
    if raw.dim() != smoothed.dim() {
        return Err(Error::Shape(format!(
            "channel shapes differ: {:?} vs {:?}",
            raw.dim(),
            smoothed.dim()
        )));
    }
    let (frames, bands) = raw.dim();
    let mut values = Array3::zeros((frames, bands, 2));
    values.slice_mut(s![.., .., 0]).assign(&raw.mapv(|v| v as f32));
    values.slice_mut(s![.., .., 1]).assign(&smoothed.mapv(|v| v as f32));
    Ok(FeatureTensor { values, frame_hop_s })
}

/// Resamples to the feature rate and builds the unstandardized two-channel
/// tensor.
pub fn extract_features(clip: &AudioClip, config: &FeatureConfig) -> Result<FeatureTensor> {
    let clip = resample(clip, config.sample_rate)?;
    let raw = log_mel(&clip, config)?;
    let smoothed = temporal_smooth(&raw, config.smooth_window)?;
    stack_channels(&raw, &smoothed, config.frame_hop_s())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, seconds: f64, rate: u32) -> AudioClip {
        let n = (seconds * f64::from(rate)) as usize;
        let w = 2.0 * std::f64::consts::PI * freq / f64::from(rate);
        AudioClip::new((0..n).map(|i| 0.5 * (w * i as f64).sin()).collect(), rate).unwrap()
    }

    #[test]
    fn thirty_seconds_gives_1292_frames() {
        let cfg = FeatureConfig::default();
        assert_eq!(cfg.frames_for(30.0), 1292);
        let clip = AudioClip::silence(30.0, 22_050).unwrap();
        assert_eq!(stft_magnitude(&clip, 2048, 512).nrows(), 1292);
    }

    #[test]
    fn silence_has_zero_magnitude_and_floor_log_mel() {
        let cfg = FeatureConfig::default();
        let clip = AudioClip::silence(1.0, 22_050).unwrap();
        assert!(stft_magnitude(&clip, 2048, 512).iter().all(|&m| m == 0.0));
        let lm = log_mel(&clip, &cfg).unwrap();
        assert!(lm.iter().all(|&v| v == 1e-10f64.ln()));
        assert_eq!(lm.nrows(), stft_magnitude(&clip, 2048, 512).nrows());
    }

    #[test]
    fn one_kilohertz_peaks_at_bin_93() {
        let clip = sine(1_000.0, 2.0, 22_050);
        let mag = stft_magnitude(&clip, 2048, 512);
        let expected = (1_000.0f64 * 2048.0 / 22_050.0).round() as usize;
        assert_eq!(expected, 93);
        for f in 4..mag.nrows() - 4 {
            let row = mag.row(f);
            let k = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            assert_eq!(k, 93, "frame {f}");
        }
    }

    #[test]
    fn scaling_audio_shifts_log_mel() {
        let cfg = FeatureConfig::default();
        let clip = sine(700.0, 0.5, 22_050);
        let loud = AudioClip::new(clip.samples().iter().map(|x| x * 10.0).collect(), 22_050).unwrap();
        let (a, b) = (log_mel(&clip, &cfg).unwrap(), log_mel(&loud, &cfg).unwrap());
        let shift = 2.0 * 10f64.ln();
        let mut checked = 0;
        for (x, y) in a.iter().zip(b.iter()) {
            if *x > 1e-10f64.ln() + 20.0 {
                assert!((y - x - shift).abs() < 1e-6);
                checked += 1;
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn stacking_keeps_channel_order() {
        let raw = Array2::from_shape_fn((4, 3), |(i, j)| (i * 3 + j) as f64);
        let smooth = raw.mapv(|v| -v);
        let t = stack_channels(&raw, &smooth, 0.1).unwrap();
        assert_eq!(t.channel(0), raw.mapv(|v| v as f32));
        assert_eq!(t.channel(1), smooth.mapv(|v| v as f32));
        assert!(stack_channels(&raw, &Array2::zeros((5, 3)), 0.1).is_err());
    }

    #[test]
    fn extraction_downsamples_scene_audio() {
        let cfg = FeatureConfig {
            n_mels: 32,
            ..FeatureConfig::default()
        };
        let clip = sine(440.0, 5.0, 44_100);
        let t = extract_features(&clip, &cfg).unwrap();
        assert_eq!(t.values.dim(), (cfg.frames_for(5.0), 32, 2));
        assert!(t.values.iter().all(|v| v.is_finite()));
    }
}
