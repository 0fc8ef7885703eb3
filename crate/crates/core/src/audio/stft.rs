use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// How the signal is extended by `n_fft / 2` on each side before framing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Mirror without repeating the edge sample. Falls back to zeros when
    /// the signal is too short to mirror.
    Reflect,
    Zero,
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn forward_plan(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n))
}

fn inverse_plan(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n))
}

/// Periodic Hann window.
pub(crate) fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

fn pad_centered(x: &[f64], pad: usize, padding: Padding) -> Vec<f64> {
    let mut out = vec![0.0; x.len() + 2 * pad];
    out[pad..pad + x.len()].copy_from_slice(x);
    if padding == Padding::Reflect && x.len() > pad {
        for i in 0..pad {
            out[pad - 1 - i] = x[i + 1];
            out[pad + x.len() + i] = x[x.len() - 2 - i];
        }
    }
    out
}

/// Centered short-time Fourier transform with a periodic Hann window.
///
/// Returns `1 + len / hop` frames of `n_fft / 2 + 1` bins each.
pub fn stft(x: &[f64], n_fft: usize, hop: usize, padding: Padding) -> Vec<Vec<Complex64>> {
    let window = hann(n_fft);
    let padded = pad_centered(x, n_fft / 2, padding);
    let n_frames = 1 + x.len() / hop;
    let fft = forward_plan(n_fft);
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    let mut buf = vec![Complex64::default(); n_fft];
    let bins = n_fft / 2 + 1;
    (0..n_frames)
        .map(|f| {
            let start = f * hop;
            for (i, b) in buf.iter_mut().enumerate() {
                let v = padded.get(start + i).copied().unwrap_or(0.0);
                *b = Complex64::new(v * window[i], 0.0);
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            buf[..bins].to_vec()
        })
        .collect()
}

/// Inverse of [`stft`] by windowed overlap-add, normalized by the summed
/// squared window. Produces exactly `length` samples.
pub fn istft(frames: &[Vec<Complex64>], n_fft: usize, hop: usize, length: usize) -> Vec<f64> {
    let window = hann(n_fft);
    let ifft = inverse_plan(n_fft);
    let mut scratch = vec![Complex64::default(); ifft.get_inplace_scratch_len()];
    let total = n_fft + hop * frames.len().saturating_sub(1);
    let mut out = vec![0.0; total];
    let mut norm = vec![0.0; total];
    let mut buf = vec![Complex64::default(); n_fft];
    let bins = n_fft / 2 + 1;
    for (f, frame) in frames.iter().enumerate() {
        buf[..bins].copy_from_slice(&frame[..bins]);
        // Hermitian completion of the half spectrum.
        for k in bins..n_fft {
            buf[k] = frame[n_fft - k].conj();
        }
        buf[0].im = 0.0;
        if n_fft % 2 == 0 {
            buf[n_fft / 2].im = 0.0;
        }
        ifft.process_with_scratch(&mut buf, &mut scratch);
        let start = f * hop;
        for i in 0..n_fft {
            out[start + i] += buf[i].re / n_fft as f64 * window[i];
            norm[start + i] += window[i] * window[i];
        }
    }
    let tiny = f64::MIN_POSITIVE.sqrt();
    for (o, n) in out.iter_mut().zip(&norm) {
        if *n > tiny {
            *o /= n;
        }
    }
    let offset = n_fft / 2;
    (0..length)
        .map(|i| out.get(offset + i).copied().unwrap_or(0.0))
        .collect()
}
