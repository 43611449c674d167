//! End-to-end wiring: clips to histograms (with an on-disk cache), plane
//! networks plus SVM to a scored model, and the leave-one-subject-out run.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::classify::{concat_features, train_svm, PlaneFeature, SvmModel};
use crate::cnn::{
    load_checkpoint, sample_from_matrix, save_checkpoint, standard_layers, train, FeatureReduce,
    Network, Sample, TrainReport,
};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::eval::{
    apcer_bpcer, auc, eer, plan_folds, EvalReport, Fold, FoldRecord, ScoreSet, C_GRID,
};
use crate::ingest::{prepare_sequence, DatasetManifest, FrameSequence, Label, ManifestEntry};
use crate::intrinsic::decompose;
use crate::tophist::{build_top, format_planes, parse_planes, HistogramMatrix, Plane, ROW_LEN};

/// Histograms of one clip for the configured planes, in plane order.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipHistograms {
    pub entry: ManifestEntry,
    pub matrices: Vec<HistogramMatrix>,
}

impl ClipHistograms {
    pub fn matrix(&self, plane: Plane) -> Result<&HistogramMatrix> {
        self.matrices
            .iter()
            .find(|m| m.plane == plane)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "clip {} has no {plane} histogram",
                    self.entry.key()
                ))
            })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FeaturizeLog {
    pub computed: usize,
    pub cached: usize,
}

/// Replaces every frame by its clamped reflectance.
pub fn reflectance_sequence(seq: &FrameSequence, cfg: &RunConfig) -> Result<FrameSequence> {
    let one = |f| decompose(f, &cfg.decompose).map(|d| d.reflectance());
    #[cfg(feature = "parallel")]
    let frames = {
        use rayon::prelude::*;
        seq.frames()
            .par_iter()
            .map(one)
            .collect::<Result<Vec<_>>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let frames = seq.frames().iter().map(one).collect::<Result<Vec<_>>>()?;
    seq.with_frames(frames)
}

/// Histograms of all planes of a prepared clip, from its reflectance when
/// `cfg.intrinsic` is set.
pub fn sequence_histograms(seq: &FrameSequence, cfg: &RunConfig) -> Result<[HistogramMatrix; 3]> {
    if cfg.intrinsic {
        build_top(&reflectance_sequence(seq, cfg)?, cfg.normalization)
    } else {
        build_top(seq, cfg.normalization)
    }
}

fn cache_path(dir: &Path, cfg: &RunConfig, entry: &ManifestEntry, plane: Plane) -> PathBuf {
    dir.join(cfg.histogram_variant()).join(format!(
        "{}.{}.iihm",
        entry.key(),
        plane.as_str().to_ascii_lowercase()
    ))
}

fn clip_histograms(
    manifest: &DatasetManifest,
    entry: &ManifestEntry,
    cfg: &RunConfig,
    cache: Option<&Path>,
    force: bool,
) -> Result<(ClipHistograms, bool)> {
    let select = |all: Vec<HistogramMatrix>| -> Vec<HistogramMatrix> {
        all.into_iter()
            .filter(|m| cfg.planes.contains(&m.plane))
            .collect()
    };
    if let (Some(dir), false) = (cache, force) {
        let paths: Vec<PathBuf> = Plane::ALL
            .iter()
            .map(|&p| cache_path(dir, cfg, entry, p))
            .collect();
        if paths.iter().all(|p| p.exists()) {
            let all = paths
                .iter()
                .map(|p| HistogramMatrix::load(p))
                .collect::<Result<Vec<_>>>()?;
            for (m, plane) in all.iter().zip(Plane::ALL) {
                if m.plane != plane
                    || m.normalization != cfg.normalization
                    || m.rows() != cfg.sequence_length
                {
                    return Err(Error::format(
                        cache_path(dir, cfg, entry, plane),
                        "cached histogram does not match the configuration",
                    ));
                }
            }
            let clip = ClipHistograms {
                entry: entry.clone(),
                matrices: select(all),
            };
            return Ok((clip, true));
        }
    }
    let seq = prepare_sequence(
        manifest,
        entry,
        cfg.sequence_length,
        cfg.frame_size,
        cfg.color_space,
    )?;
    let all = sequence_histograms(&seq, cfg)?;
    if let Some(dir) = cache {
        for (m, plane) in all.iter().zip(Plane::ALL) {
            let path = cache_path(dir, cfg, entry, plane);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            m.save(&path)?;
        }
    }
    let clip = ClipHistograms {
        entry: entry.clone(),
        matrices: select(all.into()),
    };
    Ok((clip, false))
}

/// Histograms for every manifest entry, in manifest order. With a cache
/// directory, existing matrices are reused unless `force` is set.
pub fn featurize(
    manifest: &DatasetManifest,
    cfg: &RunConfig,
    cache: Option<&Path>,
    force: bool,
) -> Result<(Vec<ClipHistograms>, FeaturizeLog)> {
    cfg.validate()?;
    let one = |e: &ManifestEntry| clip_histograms(manifest, e, cfg, cache, force);
    #[cfg(feature = "parallel")]
    let results = {
        use rayon::prelude::*;
        manifest
            .entries
            .par_iter()
            .map(one)
            .collect::<Result<Vec<_>>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let results = manifest
        .entries
        .iter()
        .map(one)
        .collect::<Result<Vec<_>>>()?;
    let mut log = FeaturizeLog::default();
    let clips = results
        .into_iter()
        .map(|(clip, hit)| {
            if hit {
                log.cached += 1;
            } else {
                log.computed += 1;
            }
            clip
        })
        .collect();
    Ok((clips, log))
}

/// Deterministic 64-bit mix for deriving sub-seeds.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const BUNDLE_FORMAT: &str = "iipad-model v1";

/// Per-plane networks followed by the SVM stage and its threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct PadModel {
    pub planes: Vec<Plane>,
    pub networks: Vec<Network<f32>>,
    pub svm: SvmModel,
    /// Scores `>= threshold` are accepted as bona fide.
    pub threshold: f64,
    pub reduce: FeatureReduce,
}

impl PadModel {
    pub fn features(&self, clip: &ClipHistograms) -> Result<Vec<f64>> {
        self.features_of(&clip.matrices)
    }

    /// Concatenated plane features; `matrices` must hold every model plane.
    pub fn features_of(&self, matrices: &[HistogramMatrix]) -> Result<Vec<f64>> {
        let per_plane = self
            .planes
            .iter()
            .zip(&self.networks)
            .map(|(&plane, net)| {
                let input = matrices
                    .iter()
                    .find(|m| m.plane == plane)
                    .ok_or_else(|| Error::invalid(format!("no {plane} histogram to score")))?
                    .to_f32();
                Ok(PlaneFeature {
                    plane,
                    values: net.extract_feature(&input, self.reduce)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(concat_features(&per_plane, &self.planes)?.values)
    }

    pub fn score(&self, clip: &ClipHistograms) -> Result<f64> {
        self.svm.score(&self.features(clip)?)
    }

    pub fn score_matrices(&self, matrices: &[HistogramMatrix]) -> Result<f64> {
        self.svm.score(&self.features_of(matrices)?)
    }

    pub fn decide(&self, score: f64) -> Label {
        if score >= self.threshold {
            Label::BonaFide
        } else {
            Label::Attack
        }
    }

    /// Writes `model.txt`, `svm.iisv` and one `cnn_<plane>.iinn` per plane.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (&plane, net) in self.planes.iter().zip(&self.networks) {
            save_checkpoint(&dir.join(checkpoint_name(plane)), net, plane)?;
        }
        self.svm.save(&dir.join("svm.iisv"))?;
        let reduce = match self.reduce {
            FeatureReduce::Mean => "mean",
            FeatureReduce::Max => "max",
        };
        let mut text = String::new();
        let _ = writeln!(text, "format={BUNDLE_FORMAT}");
        let _ = writeln!(text, "planes={}", format_planes(&self.planes));
        let _ = writeln!(text, "threshold={}", self.threshold);
        let _ = writeln!(text, "feature_reduce={reduce}");
        let path = dir.join("model.txt");
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("model.txt");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut planes = None;
        let mut threshold = None;
        let mut reduce = FeatureReduce::Mean;
        let mut format_ok = false;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(&path, format!("expected key=value, got `{line}`")))?;
            match k {
                "format" => format_ok = v == BUNDLE_FORMAT,
                "planes" => planes = Some(parse_planes(v)?),
                "threshold" => {
                    threshold = Some(
                        v.parse::<f64>()
                            .map_err(|_| Error::format(&path, "bad threshold"))?,
                    )
                }
                "feature_reduce" => {
                    reduce = match v {
                        "mean" => FeatureReduce::Mean,
                        "max" => FeatureReduce::Max,
                        _ => return Err(Error::format(&path, format!("bad feature_reduce `{v}`"))),
                    }
                }
                _ => return Err(Error::format(&path, format!("unknown key `{k}`"))),
            }
        }
        if !format_ok {
            return Err(Error::format(&path, "not a model bundle"));
        }
        let planes = planes.ok_or_else(|| Error::format(&path, "missing planes"))?;
        let threshold = threshold.ok_or_else(|| Error::format(&path, "missing threshold"))?;
        let mut networks = Vec::new();
        for &plane in &planes {
            let file = dir.join(checkpoint_name(plane));
            let (stored, net) = load_checkpoint(&file)?;
            if stored != plane {
                return Err(Error::format(
                    &file,
                    format!("checkpoint is for plane {stored}, expected {plane}"),
                ));
            }
            networks.push(net);
        }
        let svm = SvmModel::load(&dir.join("svm.iisv"))?;
        let expected: usize = networks.iter().map(|n| n.input_shape().bins).sum();
        if svm.dims() != expected {
            return Err(Error::Dimension {
                expected,
                actual: svm.dims(),
            });
        }
        Ok(PadModel {
            planes,
            networks,
            svm,
            threshold,
            reduce,
        })
    }
}

fn checkpoint_name(plane: Plane) -> String {
    format!("cnn_{}.iinn", plane.as_str().to_ascii_lowercase())
}

/// Training diagnostics of one [`fit_model`] call.
#[derive(Clone, Debug, PartialEq)]
pub struct FitSummary {
    pub cnn_reports: Vec<(Plane, TrainReport)>,
    pub c: f64,
    pub dev_eer: f64,
    pub dev_auc: f64,
}

fn samples(clips: &[&ClipHistograms], plane: Plane) -> Result<Vec<Sample<f32>>> {
    clips
        .iter()
        .map(|c| Ok(sample_from_matrix(c.matrix(plane)?, c.entry.label)))
        .collect()
}

/// Trains one network per plane on `train` (selecting weights by `dev`
/// loss), then the SVM on train features, then the dev-EER threshold.
pub fn fit_model(
    train_clips: &[&ClipHistograms],
    dev_clips: &[&ClipHistograms],
    cfg: &RunConfig,
    seed: u64,
) -> Result<(PadModel, FitSummary)> {
    cfg.validate()?;
    if dev_clips.is_empty() {
        return Err(Error::invalid("an empty dev split cannot set a threshold"));
    }
    let mut networks = Vec::new();
    let mut cnn_reports = Vec::new();
    for &plane in &cfg.planes {
        let net_seed = derive_seed(seed, 1 + plane.tag() as u64);
        let mut net =
            Network::<f32>::new(&standard_layers(), cfg.sequence_length, ROW_LEN, net_seed)?;
        let tr = samples(train_clips, plane)?;
        let dv = samples(dev_clips, plane)?;
        let train_cfg = crate::cnn::TrainConfig {
            seed: derive_seed(net_seed, 0x5eed),
            ..cfg.train.clone()
        };
        let report = train(&mut net, &tr, Some(&dv), &train_cfg)?;
        networks.push(net);
        cnn_reports.push((plane, report));
    }
    let mut model = PadModel {
        planes: cfg.planes.clone(),
        networks,
        svm: SvmModel {
            weights: Vec::new(),
            bias: 0.0,
            c: cfg.svm.c,
            mean: Vec::new(),
            scale: Vec::new(),
            passes: 0,
            duality_gap: 0.0,
        },
        threshold: 0.0,
        reduce: cfg.feature_reduce,
    };
    let train_x = train_clips
        .iter()
        .map(|c| model.features(c))
        .collect::<Result<Vec<_>>>()?;
    let train_y: Vec<Label> = train_clips.iter().map(|c| c.entry.label).collect();
    let dev_x = dev_clips
        .iter()
        .map(|c| model.features(c))
        .collect::<Result<Vec<_>>>()?;
    let dev_y: Vec<Label> = dev_clips.iter().map(|c| c.entry.label).collect();

    let fit_svm = |c: f64| -> Result<(SvmModel, ScoreSet)> {
        let svm = train_svm(
            &train_x,
            &train_y,
            &crate::classify::SvmOptions { c, ..cfg.svm },
        )?;
        let scores = dev_x
            .iter()
            .map(|x| svm.score(x))
            .collect::<Result<Vec<_>>>()?;
        let set = ScoreSet::new(scores.into_iter().zip(dev_y.iter().copied()))?;
        Ok((svm, set))
    };
    let (svm, dev_scores) = if cfg.tune_c {
        let mut best: Option<(f64, SvmModel, ScoreSet)> = None;
        for c in C_GRID {
            let (svm, set) = fit_svm(c)?;
            let rate = eer(&set)?.0;
            // Strict improvement keeps the smaller C on ties.
            if best.as_ref().is_none_or(|b| rate < b.0) {
                best = Some((rate, svm, set));
            }
        }
        let (_, svm, set) = best.expect("non-empty C grid");
        (svm, set)
    } else {
        fit_svm(cfg.svm.c)?
    };
    let (dev_eer, threshold) = eer(&dev_scores)?;
    let dev_auc = auc(&dev_scores)?;
    model.svm = svm;
    model.threshold = threshold;
    let summary = FitSummary {
        cnn_reports,
        c: model.svm.c,
        dev_eer,
        dev_auc,
    };
    Ok((model, summary))
}

/// Per-clip test score of a fold.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredClip {
    pub fold: String,
    pub key: String,
    pub subject: String,
    pub label: Label,
    pub score: f64,
    pub decision: Label,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoocvOutcome {
    pub report: EvalReport,
    pub scores: Vec<ScoredClip>,
    pub summaries: Vec<FitSummary>,
}

fn partition<'a>(clips: &'a [ClipHistograms], subjects: &[String]) -> Vec<&'a ClipHistograms> {
    clips
        .iter()
        .filter(|c| subjects.contains(&c.entry.subject_id))
        .collect()
}

/// Runs one fold and, with `artifacts`, saves its model bundle under
/// `artifacts/fold_<subject>`.
pub fn run_fold(
    clips: &[ClipHistograms],
    fold: &Fold,
    index: usize,
    cfg: &RunConfig,
    artifacts: Option<&Path>,
) -> Result<(FoldRecord, Vec<ScoredClip>, FitSummary)> {
    fold.check_disjoint()?;
    let train_clips = partition(clips, &fold.train);
    let dev_clips = partition(clips, &fold.dev);
    let test_clips = partition(clips, std::slice::from_ref(&fold.test));
    let (model, summary) = fit_model(
        &train_clips,
        &dev_clips,
        cfg,
        derive_seed(cfg.seed, index as u64),
    )?;
    if let Some(dir) = artifacts {
        model.save(&dir.join(format!("fold_{}", fold.test)))?;
    }
    let mut scored = Vec::new();
    for c in &test_clips {
        let score = model.score(c)?;
        scored.push(ScoredClip {
            fold: fold.test.clone(),
            key: c.entry.key(),
            subject: c.entry.subject_id.clone(),
            label: c.entry.label,
            score,
            decision: model.decide(score),
        });
    }
    let set = ScoreSet::new(scored.iter().map(|s| (s.score, s.label)));
    let (test, test_eer, test_auc) = match set {
        Ok(s) if s.has_both_labels() => (
            Some(apcer_bpcer(&s, model.threshold)?),
            Some(eer(&s)?.0),
            Some(auc(&s)?),
        ),
        _ => (None, None, None),
    };
    let record = FoldRecord {
        test_subject: fold.test.clone(),
        train_subjects: fold.train.clone(),
        dev_subjects: fold.dev.clone(),
        c: summary.c,
        dev_eer: summary.dev_eer,
        dev_auc: summary.dev_auc,
        threshold: model.threshold,
        test,
        test_eer,
        test_auc,
    };
    Ok((record, scored, summary))
}

/// Leave-one-subject-out evaluation over precomputed histograms.
pub fn loocv_clips(
    clips: &[ClipHistograms],
    cfg: &RunConfig,
    artifacts: Option<&Path>,
) -> Result<LoocvOutcome> {
    cfg.validate()?;
    let subjects: Vec<String> = clips.iter().map(|c| c.entry.subject_id.clone()).collect();
    let folds = plan_folds(&subjects)?;
    let mut records = Vec::new();
    let mut scores = Vec::new();
    let mut summaries = Vec::new();
    for (i, fold) in folds.iter().enumerate() {
        let (record, scored, summary) = run_fold(clips, fold, i, cfg, artifacts)?;
        records.push(record);
        scores.extend(scored);
        summaries.push(summary);
    }
    let feature_length = cfg.planes.len() * ROW_LEN;
    Ok(LoocvOutcome {
        report: EvalReport::new(feature_length, records),
        scores,
        summaries,
    })
}

/// Featurizes the manifest (through the cache, when given) and runs the
/// leave-one-subject-out protocol.
pub fn loocv(
    manifest: &DatasetManifest,
    cfg: &RunConfig,
    cache: Option<&Path>,
) -> Result<LoocvOutcome> {
    if manifest.subjects().len() < 3 {
        return Err(Error::invalid(format!(
            "leave-one-subject-out needs at least 3 subjects, got {}",
            manifest.subjects().len()
        )));
    }
    let (clips, _) = featurize(manifest, cfg, cache, false)?;
    loocv_clips(&clips, cfg, None)
}

/// Tab-separated test scores: fold, clip, subject, label, score, decision.
pub fn scores_tsv(scores: &[ScoredClip]) -> String {
    let mut out = String::from("fold\tclip\tsubject\tlabel\tscore\tdecision\n");
    for s in scores {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            s.fold, s.key, s.subject, s.label, s.score, s.decision
        );
    }
    out
}
