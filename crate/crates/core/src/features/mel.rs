use ndarray::Array2;

use crate::error::{invalid, Result};

const F_SP: f64 = 200.0 / 3.0;
const MIN_LOG_HZ: f64 = 1_000.0;
const MIN_LOG_MEL: f64 = MIN_LOG_HZ / F_SP;

fn log_step() -> f64 {
    6.4f64.ln() / 27.0
}

/// Slaney mel scale: linear below 1 kHz, logarithmic above.
pub fn hz_to_mel(hz: f64) -> f64 {
    if hz >= MIN_LOG_HZ {
        MIN_LOG_MEL + (hz / MIN_LOG_HZ).ln() / log_step()
    } else {
        hz / F_SP
    }
}

pub fn mel_to_hz(mel: f64) -> f64 {
    if mel >= MIN_LOG_MEL {
        MIN_LOG_HZ * (log_step() * (mel - MIN_LOG_MEL)).exp()
    } else {
        F_SP * mel
    }
}

/// Edge frequencies of the `n_mels` triangles: `n_mels + 2` points evenly
/// spaced in mel between `fmin` and `fmax`.
pub fn mel_edges(n_mels: usize, fmin: f64, fmax: f64) -> Vec<f64> {
    let (lo, hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
    (0..n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
        .collect()
}

/// Area-normalized triangular filters, `n_mels x (n_fft / 2 + 1)`.
pub fn mel_filterbank(n_mels: usize, sample_rate: u32, n_fft: usize, fmin: f64, fmax: Option<f64>) -> Result<Array2<f64>> {
    if n_mels == 0 || n_mels >= n_fft / 2 {
        return Err(invalid("need 0 < n_mels < n_fft / 2"));
    }
    let nyquist = f64::from(sample_rate) / 2.0;
    let fmax = fmax.unwrap_or(nyquist);
    if !(0.0 <= fmin && fmin < fmax && fmax <= nyquist) {
        return Err(invalid("need 0 <= fmin < fmax <= sample_rate / 2"));
    }
    let bins = n_fft / 2 + 1;
    let edges = mel_edges(n_mels, fmin, fmax);
    let mut w = Array2::zeros((n_mels, bins));
    for m in 0..n_mels {
        let (lo, c, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let enorm = 2.0 / (hi - lo);
        for k in 0..bins {
            let f = k as f64 * f64::from(sample_rate) / n_fft as f64;
            let rise = (f - lo) / (c - lo);
            let fall = (hi - f) / (hi - c);
            w[[m, k]] = rise.min(fall).max(0.0) * enorm;
        }
    }
    Ok(w)
}
