//! Scoring: thresholding, majority-vote scene decisions, and segment-based
//! event metrics aggregated across folds.

mod report;
mod segment;

pub use report::{comparison_table, cross_fold_report, mean_std, EvalReport, FoldMetrics, MeanStd, TaskSummary};
pub use segment::{segment_metrics, segment_roll, ClassCounts, SegmentCounts, SegmentMetrics};

use ndarray::Array2;

use crate::synth::AnnotatedEvent;

/// Global decision threshold for scene columns.
pub const DEFAULT_THRESHOLD: f64 = 0.9;

/// 1 where `pred >= threshold`.
pub fn binarize(pred: &Array2<f64>, threshold: f64) -> Array2<u8> {
    pred.mapv(|p| u8::from(p >= threshold))
}

/// Scene with the most thresholded active frames; ties go to the lowest
/// index. With no active frame the class with the highest mean score wins.
pub fn asc_majority_vote(scores: &Array2<f64>, threshold: f64) -> usize {
    let counts: Vec<usize> = binarize(scores, threshold)
        .columns()
        .into_iter()
        .map(|c| c.iter().filter(|&&v| v == 1).count())
        .collect();
    if counts.iter().any(|&c| c > 0) {
        return first_max(&counts);
    }
    let means: Vec<f64> = scores.columns().into_iter().map(|c| c.mean().unwrap_or(0.0)).collect();
    let mut best = 0;
    for (i, &m) in means.iter().enumerate() {
        if m > means[best] {
            best = i;
        }
    }
    best
}

fn first_max(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

/// Maximal runs of active frames per column become events spanning
/// `[start * hop, end * hop)`.
pub fn events_from_frames(binary: &Array2<u8>, frame_hop_s: f64, labels: &[String]) -> Vec<AnnotatedEvent> {
    assert_eq!(binary.ncols(), labels.len(), "one label per column");
    let mut events = Vec::new();
    for (c, col) in binary.columns().into_iter().enumerate() {
        let mut start = None;
        for (f, &v) in col.iter().chain(std::iter::once(&0)).enumerate() {
            match (v == 1, start) {
                (true, None) => start = Some(f),
                (false, Some(s)) => {
                    events.push(AnnotatedEvent {
                        onset_s: s as f64 * frame_hop_s,
                        offset_s: f as f64 * frame_hop_s,
                        label: labels[c].clone(),
                    });
                    start = None;
                }
                _ => {}
            }
        }
    }
    events.sort_by(|a, b| a.onset_s.total_cmp(&b.onset_s).then_with(|| a.label.cmp(&b.label)));
    events
}
