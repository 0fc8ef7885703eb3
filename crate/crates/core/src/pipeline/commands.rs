use std::path::{Path, PathBuf};

use ndarray::{Array, ArrayD, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::experiment::{compare, evaluate_fold, train_fold, Comparison, FoldEvaluation, TrainSummary};
use super::manifest::{check_stage, StageManifest, MANIFEST_FILE};
use super::store::{featurize_recording, load_recording, read_recording_index, write_dataset, FeatureStore};
use crate::error::{invalid, Error, Result};
use crate::eval::{cross_fold_report, EvalReport};
use crate::features::{make_folds, FoldRecord, FoldSplit, Task};
use crate::model::{check_network, Checkpoint, Crnn, GradCheckReport, NetworkConfig, PoolingMode};
use crate::synth::corpus::{load_sources, read_background_manifest, read_source_manifest};
use crate::synth::procedural::generate;
use crate::synth::{synthesize_dataset, Background, EventCorpus, PrepareOptions};

/// Resolved configuration shared by every stage.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub config: ExperimentConfig,
    /// Overrides already applied to `config`; recorded in manifests.
    pub overrides: Vec<String>,
    /// Proceed despite stale upstream stages.
    pub force: bool,
}

impl RunContext {
    pub fn new(config: ExperimentConfig) -> Self {
        Self {
            config,
            overrides: Vec::new(),
            force: false,
        }
    }

    /// Loads `config_path` (or the desk preset) and applies overrides.
    pub fn resolve(config_path: Option<&Path>, overrides: &[String], force: bool) -> Result<Self> {
        let base = match config_path {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::desk(),
        };
        Ok(Self {
            config: base.with_overrides(overrides)?,
            overrides: overrides.to_vec(),
            force,
        })
    }

    fn manifest(&self, stage: &str) -> StageManifest {
        StageManifest::new(stage, self.config.seed, self.config.hash(), &self.overrides)
    }
}

fn fresh_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// Writes the procedural event sources, backgrounds, their manifests, and
/// the matching ontology under `out`.
pub fn cmd_procedural_corpus(ctx: &RunContext, out: &Path) -> Result<StageManifest> {
    fresh_dir(out)?;
    let corpus = generate(&ctx.config.procedural)?;
    let paths = corpus.write(out)?;
    let mut m = ctx.manifest("procedural-corpus");
    for p in [&paths.ontology, &paths.events_manifest, &paths.backgrounds_manifest] {
        m.add_output(out, p.strip_prefix(out).expect("written under out"))?;
    }
    m.details = serde_json::json!({
        "sources": corpus.sources.len(),
        "backgrounds": corpus.backgrounds.len(),
    });
    m.write(out)?;
    Ok(m)
}

/// Normalizes, trims, resamples, and gain-triples every listed source.
pub fn cmd_prepare_corpus(ctx: &RunContext, manifest: Option<&Path>, out: &Path) -> Result<StageManifest> {
    let manifest = manifest
        .map(Path::to_path_buf)
        .or_else(|| ctx.config.corpus_manifest.clone())
        .ok_or_else(|| invalid("no corpus manifest given (flag or `corpus_manifest` in config)"))?;
    let rows = read_source_manifest(&manifest)?;
    let sources = load_sources(&rows)?;
    let corpus = EventCorpus::prepare(&sources, &PrepareOptions::default())?;
    fresh_dir(out)?;
    corpus.write(out)?;
    let mut m = ctx.manifest("prepare-corpus");
    m.add_upstream("corpus manifest", out, &manifest)?;
    for r in &rows {
        m.add_upstream(&format!("source {}/{}", r.event_class, r.source_id), out, &r.path)?;
    }
    m.add_output(out, "corpus.csv")?;
    m.details = serde_json::json!({ "sources": sources.len(), "entries": corpus.len() });
    m.write(out)?;
    Ok(m)
}

/// Plans, renders, and pitch-augments `scenes_per_background` scenes on
/// every background.
pub fn cmd_synthesize(ctx: &RunContext, corpus_dir: &Path, backgrounds: Option<&Path>, out: &Path) -> Result<StageManifest> {
    check_stage(corpus_dir, "prepare-corpus", ctx.force)?;
    let bg_manifest = backgrounds
        .map(Path::to_path_buf)
        .or_else(|| ctx.config.background_manifest.clone())
        .ok_or_else(|| invalid("no background manifest given (flag or `background_manifest` in config)"))?;
    let ontology = ctx.config.load_ontology()?;
    let corpus = EventCorpus::load(corpus_dir)?;
    let rows = read_background_manifest(&bg_manifest)?;
    let backgrounds = rows
        .iter()
        .map(|r| {
            Ok(Background {
                background_id: r.background_id.clone(),
                scene_class: r.scene_class.clone(),
                clip: crate::audio::read_wav(&r.path)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let scenes = synthesize_dataset(
        &backgrounds,
        &ontology,
        &corpus,
        &ctx.config.dataset.synth,
        ctx.config.dataset.scenes_per_background,
        ctx.config.seed,
    )?;
    fresh_dir(out)?;
    let written = write_dataset(out, &scenes)?;
    std::fs::write(out.join("ontology.toml"), ontology.to_toml_string())?;
    let mut m = ctx.manifest("synthesize");
    m.add_upstream("corpus", out, &corpus_dir.join(MANIFEST_FILE))?;
    m.add_upstream("background manifest", out, &bg_manifest)?;
    for r in &rows {
        m.add_upstream(&format!("background {}", r.background_id), out, &r.path)?;
    }
    m.add_output(out, "ontology.toml")?;
    for rel in &written {
        m.add_output(out, rel)?;
    }
    let recordings: usize = scenes.iter().map(|s| s.recordings.len()).sum();
    let dropped: usize = scenes.iter().map(|s| s.plan.dropped.len()).sum();
    let placed: usize = scenes.iter().map(|s| s.plan.placements.len()).sum();
    m.details = serde_json::json!({
        "backgrounds": backgrounds.len(),
        "scenes": scenes.len(),
        "recordings": recordings,
        "events_placed": placed,
        "events_dropped": dropped,
    });
    m.write(out)?;
    Ok(m)
}

/// Grouped, scene-stratified folds over a synthesized dataset.
pub fn cmd_make_folds(ctx: &RunContext, dataset_dir: &Path, out: &Path) -> Result<Vec<FoldSplit>> {
    check_stage(dataset_dir, "synthesize", ctx.force)?;
    let rows = read_recording_index(dataset_dir)?;
    let records: Vec<FoldRecord> = rows.iter().map(|r| r.fold_record()).collect();
    let folds = make_folds(
        &records,
        ctx.config.folds.k,
        ctx.config.folds.validation_fraction,
        ctx.config.seed,
    )?;
    fresh_dir(out)?;
    write_json(&out.join("folds.json"), &folds)?;
    let mut m = ctx.manifest("make-folds");
    m.add_upstream("dataset", out, &dataset_dir.join(MANIFEST_FILE))?;
    m.add_output(out, "folds.json")?;
    m.details = serde_json::json!(folds
        .iter()
        .map(|f| serde_json::json!({
            "fold": f.fold_id,
            "train": f.train.len(),
            "validation": f.validation.len(),
            "test": f.test.len(),
        }))
        .collect::<Vec<_>>());
    m.write(out)?;
    Ok(folds)
}

/// Extracts features and labels for every recording and fits one
/// standardizer per fold on its training portion.
pub fn cmd_featurize(ctx: &RunContext, dataset_dir: &Path, folds_dir: &Path, out: &Path) -> Result<StageManifest> {
    check_stage(dataset_dir, "synthesize", ctx.force)?;
    check_stage(folds_dir, "make-folds", ctx.force)?;
    let ontology = crate::synth::SceneOntology::load(dataset_dir.join("ontology.toml"))?;
    let rows = read_recording_index(dataset_dir)?;
    let folds: Vec<FoldSplit> = read_json(&folds_dir.join("folds.json"))?;
    let fc = &ctx.config.features;
    let recordings = rows
        .par_iter()
        .map(|row| {
            let (audio, annotation) = load_recording(dataset_dir, row)?;
            featurize_recording(&row.id, &row.background_id, &audio, &annotation, &ontology, fc)
        })
        .collect::<Result<Vec<_>>>()?;
    let store = FeatureStore::build(ontology, fc.clone(), recordings, folds)?;
    fresh_dir(out)?;
    let written = store.write(out)?;
    let mut m = ctx.manifest("featurize");
    m.add_upstream("dataset", out, &dataset_dir.join(MANIFEST_FILE))?;
    m.add_upstream("folds", out, &folds_dir.join(MANIFEST_FILE))?;
    for rel in &written {
        m.add_output(out, rel)?;
    }
    let first = store.recordings.first().map(|r| r.features.values.dim());
    m.details = serde_json::json!({
        "recordings": store.recordings.len(),
        "folds": store.folds.len(),
        "feature_shape": first.map(|(a, b, c)| vec![a, b, c]),
        "label_width": store.ontology.label_width(),
    });
    m.write(out)?;
    Ok(m)
}

fn load_store(ctx: &RunContext, features_dir: &Path) -> Result<FeatureStore> {
    check_stage(features_dir, "featurize", ctx.force)?;
    let store = FeatureStore::load(features_dir)?;
    if store.config != ctx.config.features {
        return Err(Error::Config(format!(
            "feature settings in {} differ from the experiment config",
            features_dir.display()
        )));
    }
    Ok(store)
}

/// Writes checkpoint, history, and summary of one run into `dir`. The
/// history holds wall-clock times and is left out of the manifest.
fn write_run(dir: &Path, network: &Crnn<f32>, outcome: &crate::model::TrainOutcome, summary: &TrainSummary) -> Result<Vec<&'static str>> {
    fresh_dir(dir)?;
    Checkpoint::from_network(network, &outcome.rng).write(dir.join("checkpoint.bin"))?;
    outcome.history.write_csv(dir.join("history.csv"))?;
    write_json(&dir.join("training.json"), summary)?;
    Ok(vec!["checkpoint.bin", "training.json"])
}

fn write_evaluation(dir: &Path, task: Task, evaluation: &FoldEvaluation) -> Result<(EvalReport, Vec<PathBuf>)> {
    fresh_dir(&dir.join("predictions"))?;
    let report = cross_fold_report(task, vec![evaluation.metrics.clone()]);
    std::fs::write(dir.join("report.json"), report.to_json() + "\n")?;
    std::fs::write(dir.join("report.txt"), report.to_text())?;
    let mut written = vec![PathBuf::from("report.json"), PathBuf::from("report.txt")];
    for (id, track) in &evaluation.predictions {
        let rel = PathBuf::from("predictions").join(format!("{id}.txt"));
        track.write(dir.join(&rel))?;
        written.push(rel);
    }
    Ok((report, written))
}

/// Trains one task on one fold; writes checkpoint, history, and summary.
pub fn cmd_train(ctx: &RunContext, features_dir: &Path, task: Task, fold: usize, out: &Path) -> Result<TrainSummary> {
    let store = load_store(ctx, features_dir)?;
    let (network, outcome, summary) = train_fold(&ctx.config, &store, task, fold)?;
    let outputs = write_run(out, &network, &outcome, &summary)?;
    let mut m = ctx.manifest("train");
    m.add_upstream("features", out, &features_dir.join(MANIFEST_FILE))?;
    for rel in outputs {
        m.add_output(out, rel)?;
    }
    m.details = serde_json::to_value(&summary)?;
    m.write(out)?;
    Ok(summary)
}

/// Scores a trained run on its fold's test set. The event threshold is
/// tuned on the fold's validation set.
pub fn cmd_evaluate(ctx: &RunContext, features_dir: &Path, run_dir: &Path, out: &Path) -> Result<EvalReport> {
    check_stage(run_dir, "train", ctx.force)?;
    let store = load_store(ctx, features_dir)?;
    let summary: TrainSummary = read_json(&run_dir.join("training.json"))?;
    let checkpoint = Checkpoint::read(run_dir.join("checkpoint.bin"))?;
    let mut network = checkpoint.to_network::<f32>()?;
    let expected = super::experiment::network_config(&ctx.config, &store, summary.task);
    if network.config != expected {
        return Err(Error::Config("checkpoint network differs from the experiment config".into()));
    }
    let evaluation = evaluate_fold(
        &mut network,
        &store,
        summary.fold,
        summary.task,
        &ctx.config.evaluation,
        ctx.config.training.batch_size,
        &summary,
    )?;
    fresh_dir(out)?;
    let (report, written) = write_evaluation(out, summary.task, &evaluation)?;
    let mut m = ctx.manifest("evaluate");
    m.add_upstream("features", out, &features_dir.join(MANIFEST_FILE))?;
    m.add_upstream("run", out, &run_dir.join(MANIFEST_FILE))?;
    for rel in &written {
        m.add_output(out, rel)?;
    }
    m.write(out)?;
    Ok(report)
}

/// Runs asc, sed, and joint on every fold and writes the separate-versus-
/// joint table.
pub fn cmd_compare(ctx: &RunContext, features_dir: &Path, out: &Path) -> Result<Comparison> {
    let store = load_store(ctx, features_dir)?;
    let (comparison, runs) = compare(&ctx.config, &store)?;
    fresh_dir(out)?;
    let mut m = ctx.manifest("compare");
    m.add_upstream("features", out, &features_dir.join(MANIFEST_FILE))?;
    for (task, task_runs) in &runs {
        for run in task_runs {
            let rel = PathBuf::from("runs").join(task.name()).join(format!("fold_{}", run.summary.fold));
            let dir = out.join(&rel);
            for f in write_run(&dir, &run.network, &run.outcome, &run.summary)? {
                m.add_output(out, rel.join(f))?;
            }
            for f in write_evaluation(&dir, *task, &run.evaluation)?.1 {
                m.add_output(out, rel.join(f))?;
            }
        }
    }
    fresh_dir(&out.join("reports"))?;
    for report in [&comparison.asc, &comparison.sed, &comparison.joint] {
        let name = report.task.name();
        std::fs::write(out.join("reports").join(format!("{name}.json")), report.to_json() + "\n")?;
        std::fs::write(out.join("reports").join(format!("{name}.txt")), report.to_text())?;
        m.add_output(out, format!("reports/{name}.json"))?;
        m.add_output(out, format!("reports/{name}.txt"))?;
    }
    std::fs::write(out.join("comparison.txt"), &comparison.table)?;
    write_json(&out.join("comparison.json"), &comparison)?;
    m.add_output(out, "comparison.txt")?;
    m.add_output(out, "comparison.json")?;
    m.write(out)?;
    Ok(comparison)
}

/// Finite-difference check of the reduced network at 64-bit precision.
pub fn cmd_gradient_check(seed: u64, tolerance: f64) -> Result<GradCheckReport> {
    let config = reduced_network();
    let mut net = Crnn::<f64>::new(config.clone(), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED);
    let frames = 16;
    let x: ArrayD<f64> = Array::from_shape_fn(IxDyn(&[2, frames, config.n_mels, 2]), |_| rng.gen_range(-1.0..1.0));
    let y: ArrayD<f64> = Array::from_shape_fn(IxDyn(&[2, frames, config.output_units]), |_| {
        f64::from(u8::from(rng.gen_bool(0.3)))
    });
    let report = check_network(&mut net, &x, &y, 1e-6, 40, seed)?;
    if !report.passed(tolerance) {
        return Err(Error::Divergence(format!(
            "gradient check failed: max relative error {:.3e} >= {tolerance:.1e}",
            report.max_rel_error()
        )));
    }
    Ok(report)
}

/// Two conv blocks, 16 mel bands, small recurrent and dense stages.
pub fn reduced_network() -> NetworkConfig {
    let mut c = NetworkConfig::desk(5);
    c.n_mels = 16;
    c.conv_blocks.truncate(2);
    c.conv_blocks[0].filters = 3;
    c.conv_blocks[1].filters = 4;
    c.lstm_units = 5;
    c.dense_units = 6;
    c.pooling = PoolingMode::Frequency;
    c
}
