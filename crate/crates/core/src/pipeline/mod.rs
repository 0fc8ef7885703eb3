//! Stage orchestration: corpus preparation, synthesis, folds, features,
//! training, evaluation, and the separate-versus-joint comparison.
//!
//! Every stage writes its outputs plus a `manifest.json` recording the
//! config hash, seed, overrides, and the digests of its inputs and
//! outputs. A stage whose inputs changed after it ran is stale, and
//! downstream stages refuse to read it unless forced.

mod commands;
mod config;
mod experiment;
mod manifest;
mod store;

pub use commands::{
    cmd_compare, cmd_evaluate, cmd_featurize, cmd_gradient_check, cmd_make_folds, cmd_prepare_corpus,
    cmd_procedural_corpus, cmd_synthesize, cmd_train, reduced_network, RunContext,
};
pub use config::{DatasetConfig, EvalConfig, ExperimentConfig, FoldConfig};
pub use experiment::{
    compare, evaluate_fold, network_config, predict_scores, run_fold, run_seed, run_task, silent_baseline,
    train_fold, training_config, tune_sed_threshold, Comparison, FoldEvaluation, FoldRun, TrainSummary,
};
pub use manifest::{check_stage, relative_path, StageManifest, UpstreamRef, MANIFEST_FILE};
pub use store::{
    featurize_recording, load_recording, read_plans, read_recording_index, write_dataset, FeatureStore,
    PlanRecord, Portion, RecordingRow, StoredRecording,
};
