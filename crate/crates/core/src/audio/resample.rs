use std::f64::consts::PI;
use std::sync::OnceLock;

use super::AudioClip;
use crate::error::{invalid, Result};

/// Zero crossings of the sinc kernel on each side of the centre tap.
const HALF_ZEROS: usize = 32;
/// Table entries per zero crossing.
const OVERSAMPLE: usize = 512;
const KAISER_BETA: f64 = 9.0;
/// Anti-aliasing cutoff relative to the lower Nyquist frequency.
const ROLLOFF: f64 = 0.95;

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let half = x / 2.0;
    for k in 1..64 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn kernel_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n = HALF_ZEROS * OVERSAMPLE + 2;
        let norm = bessel_i0(KAISER_BETA);
        (0..n)
            .map(|i| {
                let x = i as f64 / OVERSAMPLE as f64;
                let sinc = if i == 0 { 1.0 } else { (PI * x).sin() / (PI * x) };
                let r = (x / HALF_ZEROS as f64).min(1.0);
                let w = bessel_i0(KAISER_BETA * (1.0 - r * r).max(0.0).sqrt()) / norm;
                sinc * w
            })
            .collect()
    })
}

#[inline]
fn kernel(table: &[f64], x: f64) -> f64 {
    let pos = x.abs() * OVERSAMPLE as f64;
    let i = pos as usize;
    if i + 1 >= table.len() {
        return 0.0;
    }
    let frac = pos - i as f64;
    table[i] + (table[i + 1] - table[i]) * frac
}

/// Band-limited (Kaiser-windowed sinc) resampling of raw samples.
///
/// `ratio` is output rate over input rate; output sample `n` is taken at
/// input position `n / ratio`. Exactly `out_len` samples are produced.
pub fn resample_by_ratio(input: &[f64], ratio: f64, out_len: usize) -> Vec<f64> {
    let table = kernel_table();
    let cutoff = ROLLOFF * ratio.min(1.0);
    let reach = HALF_ZEROS as f64 / cutoff;
    let n_in = input.len() as isize;
    (0..out_len)
        .map(|n| {
            let t = n as f64 / ratio;
            let lo = ((t - reach).ceil() as isize).max(0);
            let hi = ((t + reach).floor() as isize).min(n_in - 1);
            let mut acc = 0.0;
            let mut k = lo;
            while k <= hi {
                acc += input[k as usize] * kernel(table, cutoff * (t - k as f64));
                k += 1;
            }
            acc * cutoff
        })
        .collect()
}

/// Converts `clip` to `target_rate`. Same-rate input is returned unchanged.
pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip> {
    if target_rate == 0 {
        return Err(invalid("target rate must be positive"));
    }
    if target_rate == clip.sample_rate() {
        return Ok(clip.clone());
    }
    let ratio = f64::from(target_rate) / f64::from(clip.sample_rate());
    let out_len = ((clip.len() as f64 * ratio).round() as usize).max(1);
    AudioClip::new(resample_by_ratio(clip.samples(), ratio, out_len), target_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::test_util::{dominant_frequency, sine};

    #[test]
    fn silence_upsampled_stays_silent() {
        let c = AudioClip::silence(1.0, 22_050).unwrap();
        let out = resample(&c, 44_100).unwrap();
        assert_eq!(out.len(), 44_100);
        assert_eq!(out.sample_rate(), 44_100);
        assert!(out.samples().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn same_rate_is_bitwise_identity() {
        let c = sine(123.4, 0.3, 16_000, 0.7);
        assert_eq!(resample(&c, 16_000).unwrap(), c);
    }

    #[test]
    fn tone_frequency_survives_rate_change() {
        let c = sine(440.0, 1.0, 48_000, 0.8);
        let out = resample(&c, 44_100).unwrap();
        assert_eq!(out.len(), 44_100);
        let f = dominant_frequency(&out);
        assert!((f - 440.0).abs() <= 1.0, "dominant {f}");
    }

    #[test]
    fn duration_within_one_output_sample() {
        for &(from, to, n) in &[(44_100u32, 22_050u32, 12_345usize), (22_050, 48_000, 777), (8_000, 44_100, 1_001)] {
            let c = AudioClip::new(vec![0.1; n], from).unwrap();
            let out = resample(&c, to).unwrap();
            assert!((out.duration_s() - c.duration_s()).abs() <= 1.0 / f64::from(to));
        }
    }

    #[test]
    fn round_trip_residual_below_minus_40_db() {
        for &(a, b) in &[(44_100u32, 22_050u32), (48_000, 44_100), (22_050, 16_000)] {
            let limit = 0.4 * f64::from(a.min(b));
            for &f in &[220.0, 1_000.0, 0.9 * limit] {
                let c = sine(f, 0.5, a, 0.9);
                let back = resample(&resample(&c, b).unwrap(), a).unwrap();
                // Compare away from the edges where the kernel is truncated.
                let margin = 2_000.min(c.len() / 4);
                let x = &c.samples()[margin..c.len() - margin];
                let y = &back.samples()[margin..c.len() - margin];
                let err: f64 = x.iter().zip(y).map(|(p, q)| (p - q).powi(2)).sum();
                let sig: f64 = x.iter().map(|p| p * p).sum();
                let db = 10.0 * (err / sig).log10();
                assert!(db < -40.0, "{a}->{b}->{a} at {f} Hz: {db:.1} dB");
            }
        }
    }
}
