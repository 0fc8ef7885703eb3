use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SceneOntology;
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedEvent {
    pub onset_s: f64,
    pub offset_s: f64,
    pub label: String,
}

/// Event list plus scene label for one rendered recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationTrack {
    pub scene_label: String,
    pub duration_s: f64,
    pub events: Vec<AnnotatedEvent>,
}

/// Rounds to the six decimal places used in the text format.
pub fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

impl AnnotationTrack {
    pub fn new(scene_label: impl Into<String>, duration_s: f64, mut events: Vec<AnnotatedEvent>) -> Self {
        events.sort_by(|a, b| a.onset_s.total_cmp(&b.onset_s));
        Self {
            scene_label: scene_label.into(),
            duration_s,
            events,
        }
    }

    /// Checks interval sanity, label membership, and scene compatibility.
    pub fn validate(&self, ontology: &SceneOntology) -> Result<()> {
        ontology.scene_index(&self.scene_label)?;
        for e in &self.events {
            ontology.event_index(&e.label)?;
            if !(0.0 <= e.onset_s && e.onset_s < e.offset_s && e.offset_s <= self.duration_s + 1e-9) {
                return Err(invalid(format!(
                    "bad event interval {}..{} for `{}`",
                    e.onset_s, e.offset_s, e.label
                )));
            }
            if !ontology.is_compatible(&self.scene_label, &e.label) {
                return Err(invalid(format!(
                    "event `{}` not compatible with scene `{}`",
                    e.label, self.scene_label
                )));
            }
        }
        Ok(())
    }

    /// Largest number of simultaneously active events.
    pub fn max_concurrency(&self) -> usize {
        max_concurrency(self.events.iter().map(|e| (e.onset_s, e.offset_s)))
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("# scene: {}\n# duration: {:.6}\n", self.scene_label, self.duration_s);
        let mut events: Vec<&AnnotatedEvent> = self.events.iter().collect();
        events.sort_by(|a, b| a.onset_s.total_cmp(&b.onset_s));
        for e in events {
            writeln!(out, "{:.6}\t{:.6}\t{}", e.onset_s, e.offset_s, e.label).unwrap();
        }
        out
    }

    /// Parses the tab-separated annotation format. `source` names the input
    /// in error messages.
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: source.to_string(),
            line,
            message,
        };
        let mut scene = None;
        let mut duration = 30.0;
        let mut events = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('#') {
                let header = header.trim();
                if let Some(label) = header.strip_prefix("scene:") {
                    scene = Some(label.trim().to_string());
                } else if let Some(d) = header.strip_prefix("duration:") {
                    duration = d
                        .trim()
                        .parse()
                        .map_err(|_| err(line_no, format!("bad duration `{}`", d.trim())))?;
                }
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(err(line_no, format!("expected 3 tab-separated fields, found {}", fields.len())));
            }
            let num = |s: &str| -> Result<f64> {
                s.trim().parse().map_err(|_| err(line_no, format!("bad time `{s}`")))
            };
            let onset_s = num(fields[0])?;
            let offset_s = num(fields[1])?;
            if !(onset_s >= 0.0 && offset_s > onset_s) {
                return Err(err(line_no, format!("invalid interval {onset_s}..{offset_s}")));
            }
            events.push(AnnotatedEvent {
                onset_s,
                offset_s,
                label: fields[2].trim().to_string(),
            });
        }
        let scene_label = scene.ok_or_else(|| err(1, "missing `# scene:` header".into()))?;
        Ok(Self::new(scene_label, duration, events))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::parse(&std::fs::read_to_string(path)?, &path.display().to_string())
    }
}

/// Sweep-line maximum overlap of half-open intervals.
pub fn max_concurrency(intervals: impl IntoIterator<Item = (f64, f64)>) -> usize {
    let mut points: Vec<(f64, i32)> = Vec::new();
    for (a, b) in intervals {
        points.push((a, 1));
        points.push((b, -1));
    }
    // Ends sort before starts at the same instant.
    points.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    let mut cur = 0i32;
    let mut best = 0i32;
    for (_, d) in points {
        cur += d;
        best = best.max(cur);
    }
    best as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(on: f64, off: f64, label: &str) -> AnnotatedEvent {
        AnnotatedEvent {
            onset_s: on,
            offset_s: off,
            label: label.into(),
        }
    }

    #[test]
    fn empty_track_round_trips() {
        let t = AnnotationTrack::new("park", 30.0, vec![]);
        assert_eq!(AnnotationTrack::parse(&t.to_text(), "t").unwrap(), t);
    }

    #[test]
    fn many_events_round_trip_at_six_decimals() {
        let events: Vec<AnnotatedEvent> = (0..21)
            .map(|i| {
                let on = round6(i as f64 * 1.234_567_89 % 28.0);
                ev(on, round6(on + 0.5 + i as f64 * 0.01), "speech")
            })
            .collect();
        let t = AnnotationTrack::new("bus", 30.0, events);
        let back = AnnotationTrack::parse(&t.to_text(), "t").unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn overlapping_events_kept_in_onset_order() {
        let t = AnnotationTrack::new(
            "office",
            30.0,
            vec![ev(5.0, 9.0, "knock"), ev(1.0, 6.0, "phone"), ev(5.0, 7.0, "keys")],
        );
        let back = AnnotationTrack::parse(&t.to_text(), "t").unwrap();
        let labels: Vec<&str> = back.events.iter().map(|e| e.label.as_str()).collect();
        assert_eq!(labels, ["phone", "knock", "keys"]);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "# scene: bus\n0.0\t1.0\tspeech\n2.0\toops\tcough\n";
        match AnnotationTrack::parse(text, "file.txt") {
            Err(Error::Parse { line, path, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(path, "file.txt");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            AnnotationTrack::parse("0\t1\tx\n", "f"),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            AnnotationTrack::parse("# scene: a\n1\t2\n", "f"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn sweep_line_counts_half_open_overlap() {
        assert_eq!(max_concurrency(vec![(0.0, 1.0), (1.0, 2.0)]), 1);
        assert_eq!(max_concurrency(vec![(0.0, 2.0), (1.0, 3.0), (1.5, 1.6)]), 3);
        assert_eq!(max_concurrency(Vec::new()), 0);
    }

    #[test]
    fn validation_checks_compatibility() {
        let o = SceneOntology::paper();
        let ok = AnnotationTrack::new("quietstreet", 30.0, vec![ev(1.0, 2.0, "birdsong")]);
        ok.validate(&o).unwrap();
        let bad = AnnotationTrack::new("quietstreet", 30.0, vec![ev(1.0, 2.0, "checkout_beeps")]);
        assert!(bad.validate(&o).is_err());
    }
}
