use ndarray::Array2;

use crate::error::{invalid, Result};

/// Centered moving average along the time axis (rows), replicating the
/// first and last frames at the edges.
pub fn temporal_smooth(feature: &Array2<f64>, window_frames: usize) -> Result<Array2<f64>> {
    if window_frames == 0 || window_frames % 2 == 0 {
        return Err(invalid("smoothing window must be odd and >= 1"));
    }
    if window_frames == 1 {
        return Ok(feature.clone());
    }
    let (frames, bands) = feature.dim();
    let half = (window_frames / 2) as isize;
    let last = frames as isize - 1;
    let mut out = Array2::zeros((frames, bands));
    for b in 0..bands {
        let col = feature.column(b);
        // Running sum over the clamped window.
        let at = |i: isize| col[i.clamp(0, last) as usize];
        let mut sum: f64 = (-half..=half).map(at).sum();
        for t in 0..frames as isize {
            out[[t as usize, b]] = sum / window_frames as f64;
            sum += at(t + half + 1) - at(t - half);
        }
    }
    Ok(out)
}
