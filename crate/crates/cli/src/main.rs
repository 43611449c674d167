use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use iipad_core::config::RunConfig;
use iipad_core::eval::{roc_csv, roc_points, ScoreSet};
use iipad_core::ingest::{
    convert_color, load_frames, normalize_frames, DatasetManifest, FrameSequence, Label,
};
use iipad_core::pipeline::{
    featurize, fit_model, loocv_clips, scores_tsv, sequence_histograms, PadModel,
};
use iipad_core::synth::{gen_dataset, DatasetSpec};
use iipad_core::{Error, Result};

/// Face-mask presentation attack detection from intrinsic reflectance.
#[derive(Parser)]
#[command(name = "iipad", version)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic dataset with a manifest.
    Synth(SynthArgs),
    /// Decompose clips and cache their histogram matrices.
    Featurize(FeaturizeArgs),
    /// Train a model bundle on a manifest (subjects split into train/dev).
    Train(TrainArgs),
    /// Leave-one-subject-out evaluation with report files.
    Eval(EvalArgs),
    /// Score one clip directory with a trained bundle.
    Score(ScoreArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 6)]
    subjects: usize,
    #[arg(long, default_value_t = 15)]
    videos: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Frames per clip.
    #[arg(long, default_value_t = 75)]
    frames: usize,
    /// Frame side in pixels.
    #[arg(long, default_value_t = 150)]
    size: usize,
    #[arg(long)]
    out: PathBuf,
}

/// Settings shared by every command that runs the pipeline.
#[derive(Args)]
struct PipelineArgs {
    /// key=value configuration file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Color space name: rgb|hsv|ycbcr.
    #[arg(long)]
    color_space: Option<String>,
    /// Comma-separated subset of XY,XT,YT.
    #[arg(long)]
    planes: Option<String>,
    /// Histogram the input frames instead of the reflectance.
    #[arg(long)]
    no_intrinsic: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// SVM regularizer.
    #[arg(long)]
    c: Option<f64>,
    /// Choose C per fold by dev EER.
    #[arg(long)]
    tune_c: bool,
    /// Histogram cache directory.
    #[arg(long)]
    cache: Option<PathBuf>,
}

impl PipelineArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.color_space {
            cfg.set("color_space", v)?;
        }
        if let Some(v) = &self.planes {
            cfg.set("planes", v)?;
        }
        if self.no_intrinsic {
            cfg.intrinsic = false;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.epochs {
            cfg.train.epochs = v;
        }
        if let Some(v) = self.batch_size {
            cfg.train.batch_size = v;
        }
        if let Some(v) = self.c {
            cfg.svm.c = v;
        }
        if self.tune_c {
            cfg.tune_c = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct FeaturizeArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Recompute even when cached matrices exist.
    #[arg(long)]
    force: bool,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Bundle output directory.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Report output directory.
    #[arg(long)]
    out: PathBuf,
    /// Also save every fold's model bundle under the output directory.
    #[arg(long)]
    save_models: bool,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args)]
struct ScoreArgs {
    /// Bundle directory written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Directory of PNG frames.
    #[arg(long)]
    clip: PathBuf,
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let mut spec = DatasetSpec::new(a.subjects, a.videos, a.seed);
    spec.params.frames = a.frames;
    spec.params.size = a.size;
    let manifest = gen_dataset(&spec, &a.out)?;
    write(
        &a.out.join("synth.txt"),
        &format!(
            "subjects={}\nvideos={}\nseed={}\nframes={}\nsize={}\n",
            a.subjects, a.videos, a.seed, a.frames, a.size
        ),
    )?;
    println!(
        "wrote {} clips for {} subjects to {}",
        manifest.entries.len(),
        manifest.subjects().len(),
        a.out.display()
    );
    Ok(())
}

fn cmd_featurize(a: &FeaturizeArgs) -> Result<()> {
    let cfg = a.pipeline.resolve()?;
    let cache = a
        .pipeline
        .cache
        .clone()
        .unwrap_or_else(|| a.manifest.parent().unwrap_or(Path::new(".")).join("cache"));
    let manifest = DatasetManifest::load(&a.manifest)?;
    let (_, log) = featurize(&manifest, &cfg, Some(&cache), a.force)?;
    let variant = cache.join(cfg.histogram_variant());
    write(&variant.join("config.txt"), &cfg.to_text())?;
    println!(
        "featurized {} clips into {}: {} computed, {} cached",
        log.computed + log.cached,
        variant.display(),
        log.computed,
        log.cached
    );
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let cfg = a.pipeline.resolve()?;
    let manifest = DatasetManifest::load(&a.manifest)?;
    let (clips, _) = featurize(&manifest, &cfg, a.pipeline.cache.as_deref(), false)?;
    let subjects = manifest.subjects();
    if subjects.len() < 2 {
        return Err(Error::InvalidArgument(
            "training needs at least 2 subjects".into(),
        ));
    }
    // Sorted subjects alternate between train and dev, train first.
    let train_ids: Vec<&String> = subjects.iter().step_by(2).collect();
    let (train, dev): (Vec<_>, Vec<_>) = clips
        .iter()
        .partition(|c| train_ids.contains(&&c.entry.subject_id));
    let (model, summary) = fit_model(&train, &dev, &cfg, cfg.seed)?;
    model.save(&a.out)?;
    write(&a.out.join("config.txt"), &cfg.to_text())?;
    for (plane, report) in &summary.cnn_reports {
        println!(
            "{plane}: {} epochs, selected epoch {}",
            report.epochs_run(),
            report.selected_epoch
        );
    }
    println!(
        "dev EER {:.4}, dev AUC {:.4}, C {}, threshold {}",
        summary.dev_eer, summary.dev_auc, summary.c, model.threshold
    );
    println!("saved model bundle to {}", a.out.display());
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let cfg = a.pipeline.resolve()?;
    let manifest = DatasetManifest::load(&a.manifest)?;
    create_dir(&a.out)?;
    write(&a.out.join("config.txt"), &cfg.to_text())?;
    let (clips, log) = featurize(&manifest, &cfg, a.pipeline.cache.as_deref(), false)?;
    eprintln!(
        "histograms: {} computed, {} cached",
        log.computed, log.cached
    );
    let models = a.save_models.then(|| a.out.join("models"));
    let outcome = loocv_clips(&clips, &cfg, models.as_deref())?;
    let report = &outcome.report;
    println!("feature length {}", report.feature_length);
    write(&a.out.join("report.txt"), &report.to_kv())?;
    write(&a.out.join("report_table.txt"), &report.to_table())?;
    write(&a.out.join("scores.tsv"), &scores_tsv(&outcome.scores))?;
    for fold in &report.folds {
        let set = ScoreSet::new(
            outcome
                .scores
                .iter()
                .filter(|s| s.fold == fold.test_subject)
                .map(|s| (s.score, s.label)),
        );
        if let Ok(set) = set.and_then(|s| roc_points(&s)) {
            write(
                &a.out.join(format!("roc_{}.csv", fold.test_subject)),
                &roc_csv(&set),
            )?;
        }
    }
    print!("{}", report.to_table());
    println!(
        "aggregate ACER {:.4} (APCER {:.4}, BPCER {:.4}), EER {:.4}, AUC {:.4}",
        report.mean.acer, report.mean.apcer, report.mean.bpcer, report.mean.eer, report.mean.auc
    );
    Ok(())
}

fn cmd_score(a: &ScoreArgs) -> Result<()> {
    let model = PadModel::load(&a.model)?;
    let cfg = RunConfig::load(&a.model.join("config.txt"))?;
    let frames = load_frames(&a.clip, cfg.sequence_length)?;
    // The label is unknown here and unused by scoring.
    let seq = FrameSequence::new(frames, "clip", Label::Attack, a.clip.to_string_lossy())?;
    let seq = normalize_frames(&seq, cfg.frame_size)?;
    let converted = seq
        .frames()
        .iter()
        .map(|f| convert_color(f, cfg.color_space))
        .collect::<Result<Vec<_>>>()?;
    let matrices = sequence_histograms(&seq.with_frames(converted)?, &cfg)?;
    let score = model.score_matrices(&matrices)?;
    println!("score {score}");
    println!("threshold {}", model.threshold);
    println!("decision {}", model.decide(score));
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(Error::InvalidArgument(
                "--workers must be at least 1".into(),
            ));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidState(e.to_string()))?;
    }
    match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Featurize(a) => cmd_featurize(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Score(a) => cmd_score(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
