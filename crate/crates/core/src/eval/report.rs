use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::segment::SegmentMetrics;
use crate::features::Task;

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

pub fn mean_std(values: &[f64]) -> Option<MeanStd> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some(MeanStd { mean, std: var.sqrt() })
}

/// Scores of one trained model on one fold's test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub n_test: usize,
    pub asc_threshold: Option<f64>,
    pub asc_accuracy: Option<f64>,
    pub sed_threshold: Option<f64>,
    pub sed: Option<SegmentMetrics>,
    pub best_epoch: usize,
    pub epochs_to_converge: usize,
}

/// Cross-fold summary for one task. F1 values are percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub folds: Vec<FoldMetrics>,
    pub asc_accuracy: Option<MeanStd>,
    pub sed_f1: Option<MeanStd>,
    pub sed_er: Option<MeanStd>,
    pub class_f1: BTreeMap<String, MeanStd>,
    pub class_er: BTreeMap<String, MeanStd>,
    pub epochs_to_converge: Option<MeanStd>,
}

pub fn cross_fold_report(task: Task, folds: Vec<FoldMetrics>) -> EvalReport {
    let asc: Vec<f64> = folds.iter().filter_map(|f| f.asc_accuracy).collect();
    let sed: Vec<&SegmentMetrics> = folds.iter().filter_map(|f| f.sed.as_ref()).collect();
    let f1: Vec<f64> = sed.iter().map(|m| 100.0 * m.f1()).collect();
    let er: Vec<f64> = sed.iter().filter_map(|m| m.error_rate()).collect();
    let mut per_class_f1: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut per_class_er: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for m in &sed {
        for (c, counts) in &m.class_counts {
            per_class_f1.entry(c.clone()).or_default().push(100.0 * counts.f1());
            if let Some(e) = counts.error_rate() {
                per_class_er.entry(c.clone()).or_default().push(e);
            }
        }
    }
    let epochs: Vec<f64> = folds.iter().map(|f| f.epochs_to_converge as f64).collect();
    let summarize = |m: BTreeMap<String, Vec<f64>>| -> BTreeMap<String, MeanStd> {
        m.into_iter().filter_map(|(k, v)| mean_std(&v).map(|s| (k, s))).collect()
    };
    EvalReport {
        task,
        asc_accuracy: mean_std(&asc),
        sed_f1: mean_std(&f1),
        sed_er: mean_std(&er),
        class_f1: summarize(per_class_f1),
        class_er: summarize(per_class_er),
        epochs_to_converge: mean_std(&epochs),
        folds,
    }
}

fn cell(v: Option<MeanStd>, percent: bool) -> String {
    match (v, percent) {
        (None, _) => "-".into(),
        (Some(m), true) => format!("{:.2}% ± {:.2}%", m.mean, m.std),
        (Some(m), false) => format!("{:.2} ± {:.2}", m.mean, m.std),
    }
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned plain-text table: one row per fold plus the summary row.
    pub fn to_text(&self) -> String {
        let mut rows = vec![["fold".to_string(), "ASC acc".into(), "SED F1".into(), "SED ER".into(), "epochs".into()]];
        for f in &self.folds {
            rows.push([
                f.fold.to_string(),
                f.asc_accuracy.map_or("-".into(), |a| format!("{a:.4}")),
                f.sed.as_ref().map_or("-".into(), |m| format!("{:.2}%", 100.0 * m.f1())),
                f.sed
                    .as_ref()
                    .and_then(|m| m.error_rate())
                    .map_or("-".into(), |e| format!("{e:.4}")),
                f.epochs_to_converge.to_string(),
            ]);
        }
        rows.push([
            "mean".into(),
            cell(self.asc_accuracy, false),
            cell(self.sed_f1, true),
            cell(self.sed_er, false),
            cell(self.epochs_to_converge, false),
        ]);
        let mut out = format!("task: {}\n", self.task);
        out.push_str(&align(&rows));
        out
    }
}

fn align<const N: usize>(rows: &[[String; N]]) -> String {
    let widths: Vec<usize> = (0..N)
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in rows {
        let line: Vec<String> = r
            .iter()
            .zip(&widths)
            .map(|(s, w)| format!("{s:<w$}", w = *w))
            .collect();
        writeln!(out, "{}", line.join("  ").trim_end()).unwrap();
    }
    out
}

/// Summary of one task in the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub task: Task,
    pub asc_accuracy: Option<MeanStd>,
    pub sed_f1: Option<MeanStd>,
    pub sed_er: Option<MeanStd>,
    pub epochs_to_converge: Option<MeanStd>,
}

/// Separate-versus-joint table: a separate-models row drawing ASC from the
/// scene-only model and SED from the event-only model, and a joint row.
pub fn comparison_table(asc: &EvalReport, sed: &EvalReport, joint: &EvalReport) -> String {
    let rows = vec![
        ["Model".to_string(), "ASC accuracy".into(), "SED F1".into(), "SED ER".into()],
        [
            "Separate models".into(),
            cell(asc.asc_accuracy, false),
            cell(sed.sed_f1, true),
            cell(sed.sed_er, false),
        ],
        [
            "Joint model".into(),
            cell(joint.asc_accuracy, false),
            cell(joint.sed_f1, true),
            cell(joint.sed_er, false),
        ],
    ];
    let mut out = align(&rows);
    out.push('\n');
    let epochs = vec![
        ["Task".to_string(), "Epochs to converge".into()],
        ["asc".into(), cell(asc.epochs_to_converge, false)],
        ["sed".into(), cell(sed.epochs_to_converge, false)],
        ["joint".into(), cell(joint.epochs_to_converge, false)],
    ];
    out.push_str(&align(&epochs));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::segment::segment_metrics;
    use crate::eval::segment::tests::ev;

    fn fold(i: usize, acc: f64) -> FoldMetrics {
        FoldMetrics {
            fold: i,
            n_test: 10,
            asc_threshold: Some(0.9),
            asc_accuracy: Some(acc),
            sed_threshold: None,
            sed: None,
            best_epoch: 3,
            epochs_to_converge: 3,
        }
    }

    #[test]
    fn population_statistics() {
        assert_eq!(mean_std(&[0.0, 1.0]), Some(MeanStd { mean: 0.5, std: 0.5 }));
        assert_eq!(mean_std(&[0.3; 5]).unwrap().std, 0.0);
        assert_eq!(mean_std(&[]), None);
        let v = [0.91, 0.87, 0.95, 0.99, 0.9];
        let m = mean_std(&v).unwrap();
        let hand_mean = (0.91 + 0.87 + 0.95 + 0.99 + 0.9) / 5.0;
        let hand_var = v.iter().map(|x| (x - hand_mean) * (x - hand_mean)).sum::<f64>() / 5.0;
        assert!((m.mean - hand_mean).abs() < 1e-15);
        assert!((m.std - hand_var.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn report_aggregates_folds() {
        let r = cross_fold_report(Task::Asc, vec![fold(0, 1.0), fold(1, 1.0)]);
        assert_eq!(r.asc_accuracy, Some(MeanStd { mean: 1.0, std: 0.0 }));
        assert!(r.sed_f1.is_none());
        let text = r.to_text();
        assert!(text.contains("1.00 ± 0.00"));
        let back: EvalReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn comparison_has_two_model_rows() {
        let mut joint = fold(0, 0.9);
        joint.sed = Some(segment_metrics(&[ev(0.0, 2.0, "a")], &[ev(0.0, 1.0, "a")], 1.0, 5.0).unwrap());
        let j = cross_fold_report(Task::Joint, vec![joint]);
        let a = cross_fold_report(Task::Asc, vec![fold(0, 0.8)]);
        let t = comparison_table(&a, &j, &j);
        let lines: Vec<&str> = t.lines().collect();
        assert!(lines[1].starts_with("Separate models"));
        assert!(lines[2].starts_with("Joint model"));
        assert!(lines[2].contains("66.67%"));
        assert!(lines[2].contains("0.50 ± 0.00"));
    }
}
