use std::collections::{BTreeMap, BTreeSet};
use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::features::frames_covering;
use crate::synth::AnnotatedEvent;

/// Totals over segments (and recordings, once accumulated).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentCounts {
    pub segments: usize,
    pub n_ref: usize,
    pub n_sys: usize,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
}

impl AddAssign for SegmentCounts {
    fn add_assign(&mut self, o: Self) {
        self.segments += o.segments;
        self.n_ref += o.n_ref;
        self.n_sys += o.n_sys;
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.substitutions += o.substitutions;
        self.deletions += o.deletions;
        self.insertions += o.insertions;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub n_ref: usize,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl AddAssign for ClassCounts {
    fn add_assign(&mut self, o: Self) {
        self.n_ref += o.n_ref;
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

/// Zero-denominator ratios are 1 when both reference and prediction are
/// empty and 0 otherwise.
fn ratio(num: usize, den: usize, both_empty: bool) -> f64 {
    if den == 0 {
        if both_empty {
            1.0
        } else {
            0.0
        }
    } else {
        num as f64 / den as f64
    }
}

impl SegmentCounts {
    fn both_empty(&self) -> bool {
        self.n_ref == 0 && self.n_sys == 0
    }

    /// `(S + D + I) / N_ref`; `None` when the reference is empty but the
    /// prediction is not.
    pub fn error_rate(&self) -> Option<f64> {
        if self.n_ref == 0 {
            return if self.n_sys == 0 { Some(0.0) } else { None };
        }
        Some((self.substitutions + self.deletions + self.insertions) as f64 / self.n_ref as f64)
    }

    pub fn f1(&self) -> f64 {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_, self.both_empty())
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp, self.both_empty())
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_, self.both_empty())
    }
}

impl ClassCounts {
    pub fn f1(&self) -> f64 {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_, self.n_ref == 0 && self.fp == 0)
    }

    /// `(FN + FP) / N_ref`, undefined for an absent class.
    pub fn error_rate(&self) -> Option<f64> {
        (self.n_ref > 0).then(|| (self.fn_ + self.fp) as f64 / self.n_ref as f64)
    }
}

/// Segment-based scores for one or more recordings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SegmentMetrics {
    pub counts: SegmentCounts,
    pub class_counts: BTreeMap<String, ClassCounts>,
}

impl SegmentMetrics {
    pub fn error_rate(&self) -> Option<f64> {
        self.counts.error_rate()
    }

    pub fn f1(&self) -> f64 {
        self.counts.f1()
    }

    pub fn precision(&self) -> f64 {
        self.counts.precision()
    }

    pub fn recall(&self) -> f64 {
        self.counts.recall()
    }

    /// Adds another recording's counts.
    pub fn accumulate(&mut self, other: &SegmentMetrics) {
        self.counts += other.counts;
        for (c, v) in &other.class_counts {
            *self.class_counts.entry(c.clone()).or_default() += *v;
        }
    }
}

/// Number of segments: the trailing partial segment counts.
fn segment_count(duration_s: f64, segment_s: f64) -> usize {
    let n = duration_s / segment_s;
    // Tolerate representation error on exact multiples.
    if (n - n.round()).abs() < 1e-9 {
        n.round() as usize
    } else {
        n.ceil() as usize
    }
}

/// Per-segment active label sets for an event list.
pub fn segment_roll(events: &[AnnotatedEvent], segment_s: f64, duration_s: f64) -> Result<Vec<BTreeSet<String>>> {
    let n = segment_count(duration_s, segment_s);
    let mut roll = vec![BTreeSet::new(); n];
    for e in events {
        if e.onset_s < 0.0 || e.offset_s <= e.onset_s {
            return Err(invalid(format!(
                "invalid event `{}` {}..{}",
                e.label, e.onset_s, e.offset_s
            )));
        }
        for k in frames_covering(e.onset_s, e.offset_s, n, segment_s) {
            roll[k].insert(e.label.clone());
        }
    }
    Ok(roll)
}

/// Segment-based metrics between a reference and a predicted event list.
pub fn segment_metrics(
    reference: &[AnnotatedEvent],
    predicted: &[AnnotatedEvent],
    segment_s: f64,
    duration_s: f64,
) -> Result<SegmentMetrics> {
    if segment_s <= 0.0 || duration_s <= 0.0 {
        return Err(invalid("segment length and duration must be positive"));
    }
    let r = segment_roll(reference, segment_s, duration_s)?;
    let p = segment_roll(predicted, segment_s, duration_s)?;
    let mut m = SegmentMetrics::default();
    for label in reference.iter().chain(predicted).map(|e| &e.label) {
        m.class_counts.entry(label.clone()).or_default();
    }
    for (rs, ps) in r.iter().zip(&p) {
        let tp = rs.intersection(ps).count();
        let fp = ps.len() - tp;
        let fn_ = rs.len() - tp;
        let c = &mut m.counts;
        c.segments += 1;
        c.n_ref += rs.len();
        c.n_sys += ps.len();
        c.tp += tp;
        c.fp += fp;
        c.fn_ += fn_;
        c.substitutions += fn_.min(fp);
        c.deletions += fn_.saturating_sub(fp);
        c.insertions += fp.saturating_sub(fn_);
        for l in rs.union(ps) {
            let cc = m.class_counts.get_mut(l).expect("label registered");
            match (rs.contains(l), ps.contains(l)) {
                (true, true) => cc.tp += 1,
                (true, false) => cc.fn_ += 1,
                (false, true) => cc.fp += 1,
                _ => {}
            }
            if rs.contains(l) {
                cc.n_ref += 1;
            }
        }
    }
    Ok(m)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub fn ev(on: f64, off: f64, label: &str) -> AnnotatedEvent {
        AnnotatedEvent {
            onset_s: on,
            offset_s: off,
            label: label.into(),
        }
    }

    /// Independent oracle: per segment, compare class sets built by direct
    /// interval intersection.
    fn oracle(reference: &[AnnotatedEvent], predicted: &[AnnotatedEvent], seg: f64, dur: f64) -> SegmentCounts {
        let n = (dur / seg).ceil() as usize;
        fn active(events: &[AnnotatedEvent], k: usize, seg: f64) -> BTreeSet<&str> {
            let (a, b) = (k as f64 * seg, (k + 1) as f64 * seg);
            events
                .iter()
                .filter(|e| e.onset_s < b && e.offset_s > a)
                .map(|e| e.label.as_str())
                .collect()
        }
        let mut c = SegmentCounts::default();
        for k in 0..n {
            let (r, p) = (active(reference, k, seg), active(predicted, k, seg));
            let tp = r.iter().filter(|l| p.contains(*l)).count();
            let (fp, fn_) = (p.len() - tp, r.len() - tp);
            c.segments += 1;
            c.n_ref += r.len();
            c.n_sys += p.len();
            c.tp += tp;
            c.fp += fp;
            c.fn_ += fn_;
            c.substitutions += fp.min(fn_);
            c.deletions += if fn_ > fp { fn_ - fp } else { 0 };
            c.insertions += if fp > fn_ { fp - fn_ } else { 0 };
        }
        c
    }

    pub fn random_events(rng: &mut ChaCha8Rng, classes: usize, dur: f64) -> Vec<AnnotatedEvent> {
        let n = rng.gen_range(0..8);
        (0..n)
            .map(|_| {
                let on = rng.gen_range(0.0..dur - 0.1);
                let off = rng.gen_range(on + 0.05..=dur);
                ev(on, off, &format!("c{}", rng.gen_range(0..classes)))
            })
            .collect()
    }

    #[test]
    fn perfect_match() {
        let r = vec![ev(0.5, 3.2, "a"), ev(2.0, 9.0, "b")];
        let m = segment_metrics(&r, &r, 1.0, 30.0).unwrap();
        assert_eq!(m.error_rate(), Some(0.0));
        assert_eq!(m.f1(), 1.0);
    }

    #[test]
    fn all_deletions() {
        let r = vec![ev(0.0, 10.0, "a")];
        let m = segment_metrics(&r, &[], 1.0, 30.0).unwrap();
        assert_eq!(m.counts.deletions, 10);
        assert_eq!(m.counts.n_ref, 10);
        assert_eq!(m.error_rate(), Some(1.0));
        assert_eq!(m.f1(), 0.0);
    }

    #[test]
    fn empty_reference_conventions() {
        let m = segment_metrics(&[], &[], 1.0, 30.0).unwrap();
        assert_eq!((m.error_rate(), m.f1()), (Some(0.0), 1.0));
        let m = segment_metrics(&[], &[ev(1.0, 2.0, "a")], 1.0, 30.0).unwrap();
        assert_eq!((m.error_rate(), m.f1()), (None, 0.0));
        assert_eq!(m.counts.n_ref, 0);
    }

    #[test]
    fn substitution_counted_once() {
        let m = segment_metrics(&[ev(0.0, 1.0, "a")], &[ev(0.0, 1.0, "b")], 1.0, 2.0).unwrap();
        assert_eq!((m.counts.substitutions, m.counts.deletions, m.counts.insertions), (1, 0, 0));
        assert_eq!(m.error_rate(), Some(1.0));
    }

    #[test]
    fn partial_trailing_segment_included() {
        let m = segment_metrics(&[ev(4.2, 4.4, "a")], &[], 1.0, 4.5).unwrap();
        assert_eq!(m.counts.segments, 5);
        assert_eq!(m.counts.deletions, 1);
    }

    #[test]
    fn invalid_events_rejected() {
        assert!(segment_metrics(&[ev(-1.0, 1.0, "a")], &[], 1.0, 5.0).is_err());
        assert!(segment_metrics(&[], &[ev(2.0, 2.0, "a")], 1.0, 5.0).is_err());
    }

    #[test]
    fn matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        for _ in 0..50 {
            let r = random_events(&mut rng, 5, 30.0);
            let p = random_events(&mut rng, 5, 30.0);
            let m = segment_metrics(&r, &p, 1.0, 30.0).unwrap();
            assert_eq!(m.counts, oracle(&r, &p, 1.0, 30.0));
        }
    }

    proptest! {
        #[test]
        fn swap_exchanges_fp_and_fn(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = random_events(&mut rng, 4, 20.0);
            let p = random_events(&mut rng, 4, 20.0);
            let a = segment_metrics(&r, &p, 1.0, 20.0).unwrap().counts;
            let b = segment_metrics(&p, &r, 1.0, 20.0).unwrap().counts;
            prop_assert_eq!((a.tp, a.fp, a.fn_), (b.tp, b.fn_, b.fp));
            prop_assert_eq!(a.f1(), b.f1());
        }

        #[test]
        fn integer_shift_invariance(seed in 0u64..10_000, shift in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = random_events(&mut rng, 4, 20.0);
            let p = random_events(&mut rng, 4, 20.0);
            let moved = |v: &[AnnotatedEvent]| -> Vec<AnnotatedEvent> {
                v.iter().map(|e| ev(e.onset_s + shift as f64, e.offset_s + shift as f64, &e.label)).collect()
            };
            let a = segment_metrics(&r, &p, 1.0, 20.0).unwrap();
            let b = segment_metrics(&moved(&r), &moved(&p), 1.0, 20.0 + shift as f64).unwrap();
            let (ca, mut cb) = (a.counts, b.counts);
            cb.segments -= shift;
            prop_assert_eq!(ca, cb);
        }

        #[test]
        fn error_rate_zero_iff_identical_rolls(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = random_events(&mut rng, 3, 10.0);
            let p = if rng.gen_bool(0.3) { r.clone() } else { random_events(&mut rng, 3, 10.0) };
            let m = segment_metrics(&r, &p, 1.0, 10.0).unwrap();
            let same = segment_roll(&r, 1.0, 10.0).unwrap() == segment_roll(&p, 1.0, 10.0).unwrap();
            if let Some(er) = m.error_rate() {
                prop_assert!(er >= 0.0);
                prop_assert_eq!(er == 0.0, same);
            }
        }
    }
}
