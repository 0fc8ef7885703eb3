use std::ops::Range;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::synth::{AnnotationTrack, SceneOntology};

/// Which label columns a model is trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Scenes, events, and the no-event column.
    Joint,
    /// Scene columns only.
    Asc,
    /// Event columns only.
    Sed,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Asc, Task::Sed, Task::Joint];

    pub fn name(self) -> &'static str {
        match self {
            Task::Joint => "joint",
            Task::Asc => "asc",
            Task::Sed => "sed",
        }
    }

    /// Columns of the full label matrix used by this task.
    pub fn columns(self, n_scenes: usize, n_events: usize) -> Range<usize> {
        match self {
            Task::Joint => 0..n_scenes + n_events + 1,
            Task::Asc => 0..n_scenes,
            Task::Sed => n_scenes..n_scenes + n_events,
        }
    }

    pub fn output_width(self, n_scenes: usize, n_events: usize) -> usize {
        self.columns(n_scenes, n_events).len()
    }

    pub fn scores_scenes(self) -> bool {
        matches!(self, Task::Joint | Task::Asc)
    }

    pub fn scores_events(self) -> bool {
        matches!(self, Task::Joint | Task::Sed)
    }
}

impl std::str::FromStr for Task {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(Task::Joint),
            "asc" => Ok(Task::Asc),
            "sed" => Ok(Task::Sed),
            _ => Err(invalid(format!("unknown task `{s}` (expected joint, asc or sed)"))),
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-frame N-hot labels laid out as `[scenes..., events..., no_event]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatrix {
    pub values: Array2<u8>,
    pub n_scenes: usize,
    pub n_events: usize,
}

impl LabelMatrix {
    pub fn frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn width(&self) -> usize {
        self.values.ncols()
    }

    pub fn scene_part(&self) -> Array2<u8> {
        self.values.slice(s![.., ..self.n_scenes]).to_owned()
    }

    pub fn event_part(&self) -> Array2<u8> {
        self.values
            .slice(s![.., self.n_scenes..self.n_scenes + self.n_events])
            .to_owned()
    }

    /// Columns for `task` as training targets.
    pub fn targets(&self, task: Task) -> Array2<f32> {
        let cols = task.columns(self.n_scenes, self.n_events);
        self.values.slice(s![.., cols]).mapv(f32::from)
    }

    /// Scene index marked in the first frame.
    pub fn scene_index(&self) -> Option<usize> {
        (0..self.n_scenes).find(|&c| self.values[[0, c]] == 1)
    }
}

fn intersects(frame: usize, hop: f64, onset: f64, offset: f64) -> bool {
    let start = frame as f64 * hop;
    let end = (frame + 1) as f64 * hop;
    onset < end && offset > start
}

/// Frames whose half-open span `[f * hop, (f + 1) * hop)` intersects
/// `[onset, offset)`.
pub fn frames_covering(onset: f64, offset: f64, frames: usize, hop: f64) -> Range<usize> {
    if frames == 0 || offset <= onset {
        return 0..0;
    }
    let mut first = ((onset / hop).floor().max(0.0) as usize).min(frames - 1);
    while first > 0 && intersects(first - 1, hop, onset, offset) {
        first -= 1;
    }
    while first < frames && !intersects(first, hop, onset, offset) {
        first += 1;
    }
    let mut end = ((offset / hop).ceil().max(0.0) as usize).clamp(first, frames);
    while end < frames && intersects(end, hop, onset, offset) {
        end += 1;
    }
    while end > first && !intersects(end - 1, hop, onset, offset) {
        end -= 1;
    }
    first..end
}

/// Rasterizes an annotation to `frames` rows. The no-event column is set
/// on frames with no active event.
pub fn labels_from_annotation(
    track: &AnnotationTrack,
    frames: usize,
    frame_hop_s: f64,
    ontology: &SceneOntology,
) -> Result<LabelMatrix> {
    let n_scenes = ontology.n_scenes();
    let n_events = ontology.n_events();
    let mut values = Array2::zeros((frames, ontology.label_width()));
    let scene = ontology.scene_index(&track.scene_label)?;
    values.column_mut(scene).fill(1);
    for e in &track.events {
        let col = n_scenes + ontology.event_index(&e.label)?;
        for f in frames_covering(e.onset_s, e.offset_s, frames, frame_hop_s) {
            values[[f, col]] = 1;
        }
    }
    let none = n_scenes + n_events;
    for f in 0..frames {
        if values.slice(s![f, n_scenes..none]).iter().all(|&v| v == 0) {
            values[[f, none]] = 1;
        }
    }
    Ok(LabelMatrix {
        values,
        n_scenes,
        n_events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::AnnotatedEvent;

    const HOP: f64 = 512.0 / 22_050.0;

    fn track(events: Vec<(f64, f64, &str)>) -> AnnotationTrack {
        AnnotationTrack::new(
            "park",
            30.0,
            events
                .into_iter()
                .map(|(a, b, l)| AnnotatedEvent {
                    onset_s: a,
                    offset_s: b,
                    label: l.into(),
                })
                .collect(),
        )
    }

    #[test]
    fn empty_track_marks_scene_and_no_event() {
        let o = SceneOntology::desk();
        let m = labels_from_annotation(&track(vec![]), 50, HOP, &o).unwrap();
        let park = o.scene_index("park").unwrap();
        for f in 0..50 {
            let row = m.values.row(f);
            assert_eq!(row.sum(), 2);
            assert_eq!(row[park], 1);
            assert_eq!(row[m.width() - 1], 1);
        }
    }

    #[test]
    fn event_on_frames_ten_to_twenty() {
        let o = SceneOntology::desk();
        let m = labels_from_annotation(&track(vec![(10.0 * HOP, 21.0 * HOP, "birdsong")]), 40, HOP, &o).unwrap();
        let col = o.n_scenes() + o.event_index("birdsong").unwrap();
        for f in 0..40 {
            // Oracle: half-open interval intersection.
            let expected = 10.0 * HOP < (f + 1) as f64 * HOP && 21.0 * HOP > f as f64 * HOP;
            assert_eq!(m.values[[f, col]] == 1, expected, "frame {f}");
        }
        assert_eq!(m.values[[9, col]], 0);
        assert_eq!(m.values[[21, col]], 0);
        assert_eq!((10..=20).filter(|&f| m.values[[f, col]] == 1).count(), 11);
    }

    #[test]
    fn paper_dimensions() {
        let o = SceneOntology::paper();
        let t = AnnotationTrack::new("bus", 30.0, vec![]);
        let m = labels_from_annotation(&t, 1292, HOP, &o).unwrap();
        assert_eq!(m.values.dim(), (1292, 43));
    }

    #[test]
    fn unknown_label_rejected() {
        let o = SceneOntology::desk();
        assert!(labels_from_annotation(&track(vec![(1.0, 2.0, "cough")]), 100, HOP, &o).is_err());
    }

    #[test]
    fn task_columns() {
        assert_eq!(Task::Joint.output_width(10, 32), 43);
        assert_eq!(Task::Asc.output_width(10, 32), 10);
        assert_eq!(Task::Sed.output_width(10, 32), 32);
        assert_eq!(Task::Sed.columns(10, 32), 10..42);
        assert_eq!("sed".parse::<Task>().unwrap(), Task::Sed);
    }

    proptest::proptest! {
        #[test]
        fn rasterization_matches_intersection_oracle(on in 0.0f64..4.0, len in 0.001f64..2.0) {
            let r = frames_covering(on, on + len, 200, HOP);
            for f in 0..200 {
                proptest::prop_assert_eq!(r.contains(&f), intersects(f, HOP, on, on + len));
            }
        }
    }
}
