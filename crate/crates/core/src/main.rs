use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use jointscape::features::Task;
use jointscape::pipeline::{
    cmd_compare, cmd_evaluate, cmd_featurize, cmd_gradient_check, cmd_make_folds, cmd_prepare_corpus,
    cmd_procedural_corpus, cmd_synthesize, cmd_train, ExperimentConfig, RunContext,
};
use jointscape::Error;

/// Soundscape synthesis and joint scene/event recognition.
#[derive(Debug, Parser)]
#[command(name = "jointscape", version)]
struct Cli {
    /// Experiment config (TOML). Defaults to the desk preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Start from a bundled preset (`desk` or `paper`) instead of a file.
    #[arg(long, global = true, conflicts_with = "config")]
    preset: Option<String>,
    /// Override a config key, e.g. `--set training.epochs=5`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Master seed; same as `--set seed=N`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Read upstream stages even if their manifests are stale.
    #[arg(long, global = true)]
    force: bool,
    /// Log per-epoch progress.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the procedural event sources and backgrounds.
    ProceduralCorpus {
        #[arg(long)]
        out: PathBuf,
    },
    /// Normalize, trim, resample, and gain-triple event sources.
    PrepareCorpus {
        /// Event-source manifest; falls back to `corpus_manifest`.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Synthesize annotated scenes on every background.
    Synthesize {
        #[arg(long)]
        corpus: PathBuf,
        /// Background manifest; falls back to `background_manifest`.
        #[arg(long)]
        backgrounds: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split a dataset into grouped, scene-stratified folds.
    MakeFolds {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract features and labels; fit per-fold standardizers.
    Featurize {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        folds: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one task on one fold.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        task: Task,
        #[arg(long)]
        fold: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a trained run on its fold's test set.
    Evaluate {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        run: PathBuf,
        /// Defaults to `<run>/evaluation`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and score asc, sed, and joint on every fold.
    Compare {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference check of the reduced network.
    GradientCheck {
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::EmptyAudio | Error::NoSignal => "audio",
        Error::RateMismatch(..) => "rate_mismatch",
        Error::OutOfBounds => "out_of_bounds",
        Error::InvalidArgument(_) => "invalid_argument",
        Error::UnknownScene(_) | Error::UnknownEvent(_) => "unknown_label",
        Error::Shape(_) => "shape",
        Error::Parse { .. } => "parse",
        Error::MissingFile(_) => "missing_file",
        Error::Divergence(_) => "divergence",
        Error::Stale(_) => "stale_upstream",
        Error::Format(_) => "format",
        Error::Config(_) => "config",
        Error::Io(_) => "io",
        Error::Wav(_) => "wav",
        Error::Json(_) => "json",
        Error::Csv(_) => "csv",
    }
}

fn print_json(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn run(cli: Cli) -> jointscape::Result<()> {
    let mut overrides = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    let ctx = match &cli.preset {
        Some(name) => RunContext {
            config: ExperimentConfig::preset(name)?.with_overrides(&overrides)?,
            overrides,
            force: cli.force,
        },
        None => RunContext::resolve(cli.config.as_deref(), &overrides, cli.force)?,
    };
    match cli.command {
        Command::ProceduralCorpus { out } => print_json(&cmd_procedural_corpus(&ctx, &out)?.details),
        Command::PrepareCorpus { manifest, out } => {
            print_json(&cmd_prepare_corpus(&ctx, manifest.as_deref(), &out)?.details)
        }
        Command::Synthesize { corpus, backgrounds, out } => {
            print_json(&cmd_synthesize(&ctx, &corpus, backgrounds.as_deref(), &out)?.details)
        }
        Command::MakeFolds { dataset, out } => {
            for f in cmd_make_folds(&ctx, &dataset, &out)? {
                println!(
                    "fold {}: train {} validation {} test {}",
                    f.fold_id,
                    f.train.len(),
                    f.validation.len(),
                    f.test.len()
                );
            }
        }
        Command::Featurize { dataset, folds, out } => {
            print_json(&cmd_featurize(&ctx, &dataset, &folds, &out)?.details)
        }
        Command::Train { features, task, fold, out } => print_json(&cmd_train(&ctx, &features, task, fold, &out)?),
        Command::Evaluate { features, run, out } => {
            let out = out.unwrap_or_else(|| run.join("evaluation"));
            print!("{}", cmd_evaluate(&ctx, &features, &run, &out)?.to_text());
        }
        Command::Compare { features, out } => {
            let c = cmd_compare(&ctx, &features, &out)?;
            print!("{}", c.table);
            if let Some(s) = c.silent_sed_f1 {
                println!("All-silent SED F1: {:.2}% ± {:.2}%", s.mean, s.std);
            }
        }
        Command::GradientCheck { tolerance } => {
            let report = cmd_gradient_check(ctx.config.seed, tolerance)?;
            for g in &report.groups {
                println!("{:<24} {:>5} entries  max rel err {:.3e}", g.name, g.checked, g.max_rel_error);
            }
            println!("PASS max relative error {:.3e} < {tolerance:.1e}", report.max_rel_error());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body = serde_json::json!({ "error": { "kind": error_kind(&e), "message": e.to_string() } });
            eprintln!("{body}");
            ExitCode::FAILURE
        }
    }
}
