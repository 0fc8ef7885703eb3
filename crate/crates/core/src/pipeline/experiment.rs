use ndarray::{s, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::config::{EvalConfig, ExperimentConfig};
use super::store::{FeatureStore, Portion};
use crate::digest::derive_seed;
use crate::error::Result;
use crate::eval::{
    asc_majority_vote, binarize, comparison_table, cross_fold_report, events_from_frames, mean_std, segment_metrics,
    EvalReport, FoldMetrics, MeanStd, SegmentMetrics,
};
use crate::features::Task;
use crate::model::{make_batch, train, Crnn, NetworkConfig, Sample, TrainConfig, TrainOutcome};
use crate::synth::AnnotationTrack;

fn task_code(task: Task) -> u64 {
    match task {
        Task::Joint => 0,
        Task::Asc => 1,
        Task::Sed => 2,
    }
}

/// Seed for the network initialization of one (task, fold) run; the
/// training seed is derived from it.
pub fn run_seed(master: u64, task: Task, fold: usize) -> u64 {
    derive_seed(master, 1_000 + 100 * task_code(task) + fold as u64)
}

/// The experiment's network with the output width of `task`.
pub fn network_config(config: &ExperimentConfig, store: &FeatureStore, task: Task) -> NetworkConfig {
    let mut net = config.network.clone();
    net.output_units = task.output_width(store.ontology.n_scenes(), store.ontology.n_events());
    net
}

pub fn training_config(config: &ExperimentConfig, task: Task, fold: usize) -> TrainConfig {
    let mut t = config.training.clone();
    t.seed = derive_seed(run_seed(config.seed, task, fold), 1);
    t
}

/// Summary of one training run, independent of wall-clock time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub task: Task,
    pub fold: usize,
    pub init_seed: u64,
    pub train_seed: u64,
    pub n_train: usize,
    pub n_validation: usize,
    pub parameters: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub epochs_to_converge: usize,
    pub stopped_early: bool,
}

/// Trains a fresh network for `task` on one fold. The returned network
/// holds the best-validation parameters.
pub fn train_fold(
    config: &ExperimentConfig,
    store: &FeatureStore,
    task: Task,
    fold: usize,
) -> Result<(Crnn<f32>, TrainOutcome, TrainSummary)> {
    let train_set = store.samples(fold, Portion::Train, task)?;
    let val_set = store.samples(fold, Portion::Validation, task)?;
    let init_seed = run_seed(config.seed, task, fold);
    let mut net = Crnn::<f32>::new(network_config(config, store, task), init_seed)?;
    let tc = training_config(config, task, fold);
    let outcome = train(&mut net, &train_set, &val_set, &tc, |r| {
        log::info!(
            "{} fold {fold} epoch {}: train {:.5} val {:.5}",
            task.name(),
            r.epoch,
            r.train_loss,
            r.val_loss
        );
    })?;
    let summary = TrainSummary {
        task,
        fold,
        init_seed,
        train_seed: tc.seed,
        n_train: train_set.len(),
        n_validation: val_set.len(),
        parameters: net.parameter_count(),
        epochs_run: outcome.history.len(),
        best_epoch: outcome.best_epoch,
        best_val_loss: outcome.best_val_loss,
        epochs_to_converge: outcome.epochs_to_converge,
        stopped_early: outcome.stopped_early,
    };
    Ok((net, outcome, summary))
}

/// Frame-level sigmoid scores `(frames, outputs)` per sample, in eval mode.
pub fn predict_scores(net: &mut Crnn<f32>, samples: &[Sample<f32>], batch_size: usize) -> Result<Vec<Array2<f64>>> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(batch_size.max(1)) {
        let refs: Vec<&Sample<f32>> = chunk.iter().collect();
        let (x, _) = make_batch(&refs)?;
        let p = net.predict(&x)?;
        for b in 0..chunk.len() {
            let frame = p.index_axis(Axis(0), b).mapv(f64::from);
            out.push(frame.into_dimensionality().expect("predictions are (batch, frames, outputs)"));
        }
    }
    Ok(out)
}

/// Scene and event score columns of one prediction. Both come from the
/// same forward pass.
fn split_scores(task: Task, scores: &Array2<f64>, n_scenes: usize, n_events: usize) -> (Option<Array2<f64>>, Option<Array2<f64>>) {
    match task {
        Task::Joint => (
            Some(scores.slice(s![.., ..n_scenes]).to_owned()),
            Some(scores.slice(s![.., n_scenes..n_scenes + n_events]).to_owned()),
        ),
        Task::Asc => (Some(scores.clone()), None),
        Task::Sed => (None, Some(scores.clone())),
    }
}

fn sed_metrics(
    store: &FeatureStore,
    ids: &[String],
    event_scores: &[Array2<f64>],
    threshold: f64,
    segment_s: f64,
) -> Result<SegmentMetrics> {
    let mut total = SegmentMetrics::default();
    for (id, scores) in ids.iter().zip(event_scores) {
        let r = store.get(id)?;
        let predicted = events_from_frames(&binarize(scores, threshold), r.features.frame_hop_s, &store.ontology.events);
        total.accumulate(&segment_metrics(&r.annotation.events, &predicted, segment_s, r.annotation.duration_s)?);
    }
    Ok(total)
}

/// Event threshold with the best validation F1; ties keep the lower value.
pub fn tune_sed_threshold(
    net: &mut Crnn<f32>,
    store: &FeatureStore,
    fold: usize,
    task: Task,
    eval: &EvalConfig,
    batch_size: usize,
) -> Result<f64> {
    let val = store.samples(fold, Portion::Validation, task)?;
    if !eval.tune_sed_threshold || val.is_empty() {
        return Ok(eval.sed_threshold);
    }
    let (n_s, n_e) = (store.ontology.n_scenes(), store.ontology.n_events());
    let scores: Vec<Array2<f64>> = predict_scores(net, &val, batch_size)?
        .iter()
        .filter_map(|p| split_scores(task, p, n_s, n_e).1)
        .collect();
    let ids: Vec<String> = val.iter().map(|s| s.id.clone()).collect();
    let mut best = (f64::NEG_INFINITY, eval.sed_threshold);
    for &t in &eval.sed_threshold_grid {
        let f1 = sed_metrics(store, &ids, &scores, t, eval.segment_s)?.f1();
        if f1 > best.0 {
            best = (f1, t);
        }
    }
    Ok(best.1)
}

/// Test-set scores of one trained network plus per-recording predicted
/// annotations.
#[derive(Debug, Clone)]
pub struct FoldEvaluation {
    pub metrics: FoldMetrics,
    pub predictions: Vec<(String, AnnotationTrack)>,
}

pub fn evaluate_fold(
    net: &mut Crnn<f32>,
    store: &FeatureStore,
    fold: usize,
    task: Task,
    eval: &EvalConfig,
    batch_size: usize,
    summary: &TrainSummary,
) -> Result<FoldEvaluation> {
    let sed_threshold = if task.scores_events() {
        Some(tune_sed_threshold(net, store, fold, task, eval, batch_size)?)
    } else {
        None
    };
    let test = store.samples(fold, Portion::Test, task)?;
    let scores = predict_scores(net, &test, batch_size)?;
    let (n_s, n_e) = (store.ontology.n_scenes(), store.ontology.n_events());
    let mut correct = 0usize;
    let mut sed_total = SegmentMetrics::default();
    let mut predictions = Vec::with_capacity(test.len());
    for (sample, p) in test.iter().zip(&scores) {
        let r = store.get(&sample.id)?;
        let (scene_scores, event_scores) = split_scores(task, p, n_s, n_e);
        let scene_label = match &scene_scores {
            Some(sc) => {
                let k = asc_majority_vote(sc, eval.asc_threshold);
                if store.ontology.scenes[k] == r.scene_class {
                    correct += 1;
                }
                store.ontology.scenes[k].clone()
            }
            None => "unscored".to_string(),
        };
        let events = match (&event_scores, sed_threshold) {
            (Some(ev), Some(t)) => {
                let predicted = events_from_frames(&binarize(ev, t), r.features.frame_hop_s, &store.ontology.events);
                sed_total.accumulate(&segment_metrics(
                    &r.annotation.events,
                    &predicted,
                    eval.segment_s,
                    r.annotation.duration_s,
                )?);
                predicted
            }
            _ => Vec::new(),
        };
        predictions.push((
            sample.id.clone(),
            AnnotationTrack::new(scene_label, r.annotation.duration_s, events),
        ));
    }
    let metrics = FoldMetrics {
        fold,
        n_test: test.len(),
        asc_threshold: task.scores_scenes().then_some(eval.asc_threshold),
        asc_accuracy: (task.scores_scenes() && !test.is_empty()).then(|| correct as f64 / test.len() as f64),
        sed_threshold,
        sed: task.scores_events().then_some(sed_total),
        best_epoch: summary.best_epoch,
        epochs_to_converge: summary.epochs_to_converge,
    };
    Ok(FoldEvaluation { metrics, predictions })
}

/// Segment metrics of a system that never reports an event, on one fold's
/// test set.
pub fn silent_baseline(store: &FeatureStore, fold: usize, segment_s: f64) -> Result<SegmentMetrics> {
    let mut total = SegmentMetrics::default();
    for id in &store.fold(fold)?.test {
        let r = store.get(id)?;
        total.accumulate(&segment_metrics(&r.annotation.events, &[], segment_s, r.annotation.duration_s)?);
    }
    Ok(total)
}

/// Everything one (task, fold) run produced.
pub struct FoldRun {
    pub network: Crnn<f32>,
    pub outcome: TrainOutcome,
    pub summary: TrainSummary,
    pub evaluation: FoldEvaluation,
}

pub fn run_fold(config: &ExperimentConfig, store: &FeatureStore, task: Task, fold: usize) -> Result<FoldRun> {
    let (mut network, outcome, summary) = train_fold(config, store, task, fold)?;
    let evaluation = evaluate_fold(
        &mut network,
        store,
        fold,
        task,
        &config.evaluation,
        config.training.batch_size,
        &summary,
    )?;
    Ok(FoldRun {
        network,
        outcome,
        summary,
        evaluation,
    })
}

/// Trains and evaluates `task` on every fold, in fold order.
pub fn run_task(config: &ExperimentConfig, store: &FeatureStore, task: Task) -> Result<(EvalReport, Vec<FoldRun>)> {
    let runs = (0..store.folds.len())
        .map(|fold| run_fold(config, store, task, fold))
        .collect::<Result<Vec<_>>>()?;
    let report = cross_fold_report(task, runs.iter().map(|r| r.evaluation.metrics.clone()).collect());
    Ok((report, runs))
}

/// The separate-versus-joint experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub asc: EvalReport,
    pub sed: EvalReport,
    pub joint: EvalReport,
    /// Segment F1 (%) of the never-active system across folds.
    pub silent_sed_f1: Option<MeanStd>,
    pub table: String,
}

pub fn compare(config: &ExperimentConfig, store: &FeatureStore) -> Result<(Comparison, Vec<(Task, Vec<FoldRun>)>)> {
    let mut reports = Vec::new();
    let mut runs = Vec::new();
    for task in Task::ALL {
        let (report, task_runs) = run_task(config, store, task)?;
        reports.push(report);
        runs.push((task, task_runs));
    }
    let silent = (0..store.folds.len())
        .map(|k| Ok(100.0 * silent_baseline(store, k, config.evaluation.segment_s)?.f1()))
        .collect::<Result<Vec<f64>>>()?;
    let joint = reports.pop().expect("three tasks");
    let sed = reports.pop().expect("three tasks");
    let asc = reports.pop().expect("three tasks");
    let table = comparison_table(&asc, &sed, &joint);
    Ok((
        Comparison {
            asc,
            sed,
            joint,
            silent_sed_f1: mean_std(&silent),
            table,
        },
        runs,
    ))
}
