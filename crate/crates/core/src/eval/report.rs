use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::metrics::Rates;
use crate::error::{Error, Result};

pub const REPORT_FORMAT: &str = "iipad-eval v1";

/// One leave-one-subject-out fold.
#[derive(Clone, Debug, PartialEq)]
pub struct FoldRecord {
    pub test_subject: String,
    pub train_subjects: Vec<String>,
    pub dev_subjects: Vec<String>,
    /// SVM regularizer used (the tuned one with C tuning on).
    pub c: f64,
    pub dev_eer: f64,
    pub dev_auc: f64,
    pub threshold: f64,
    /// Absent when the test subject has clips of one class only.
    pub test: Option<Rates>,
    pub test_eer: Option<f64>,
    pub test_auc: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Aggregate {
    pub apcer: f64,
    pub bpcer: f64,
    pub acer: f64,
    pub eer: f64,
    pub auc: f64,
    /// Folds contributing to the means.
    pub folds: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub feature_length: usize,
    pub folds: Vec<FoldRecord>,
    pub mean: Aggregate,
}

impl EvalReport {
    /// Arithmetic means over folds with two-class test data.
    pub fn new(feature_length: usize, folds: Vec<FoldRecord>) -> Self {
        let mut mean = Aggregate::default();
        for f in &folds {
            if let (Some(r), Some(eer), Some(auc)) = (f.test, f.test_eer, f.test_auc) {
                mean.apcer += r.apcer;
                mean.bpcer += r.bpcer;
                mean.acer += r.acer;
                mean.eer += eer;
                mean.auc += auc;
                mean.folds += 1;
            }
        }
        if mean.folds > 0 {
            let n = mean.folds as f64;
            mean.apcer /= n;
            mean.bpcer /= n;
            mean.acer /= n;
            mean.eer /= n;
            mean.auc /= n;
        }
        EvalReport {
            feature_length,
            folds,
            mean,
        }
    }

    /// `key=value` lines. Keys: `format`, `feature_length`, `folds`,
    /// `fold.<i>.<field>` per fold and `mean.<metric>`. Subject lists are
    /// comma-separated; missing test metrics are written as `na`.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "format={REPORT_FORMAT}");
        let _ = writeln!(out, "feature_length={}", self.feature_length);
        let _ = writeln!(out, "folds={}", self.folds.len());
        let opt = |v: Option<f64>| v.map_or("na".to_string(), |v| v.to_string());
        for (i, f) in self.folds.iter().enumerate() {
            let _ = writeln!(out, "fold.{i}.test_subject={}", f.test_subject);
            let _ = writeln!(
                out,
                "fold.{i}.train_subjects={}",
                f.train_subjects.join(",")
            );
            let _ = writeln!(out, "fold.{i}.dev_subjects={}", f.dev_subjects.join(","));
            let _ = writeln!(out, "fold.{i}.c={}", f.c);
            let _ = writeln!(out, "fold.{i}.dev_eer={}", f.dev_eer);
            let _ = writeln!(out, "fold.{i}.dev_auc={}", f.dev_auc);
            let _ = writeln!(out, "fold.{i}.threshold={}", f.threshold);
            let _ = writeln!(out, "fold.{i}.apcer={}", opt(f.test.map(|r| r.apcer)));
            let _ = writeln!(out, "fold.{i}.bpcer={}", opt(f.test.map(|r| r.bpcer)));
            let _ = writeln!(out, "fold.{i}.acer={}", opt(f.test.map(|r| r.acer)));
            let _ = writeln!(out, "fold.{i}.eer={}", opt(f.test_eer));
            let _ = writeln!(out, "fold.{i}.auc={}", opt(f.test_auc));
        }
        let m = &self.mean;
        let _ = writeln!(out, "mean.folds={}", m.folds);
        let _ = writeln!(out, "mean.apcer={}", m.apcer);
        let _ = writeln!(out, "mean.bpcer={}", m.bpcer);
        let _ = writeln!(out, "mean.acer={}", m.acer);
        let _ = writeln!(out, "mean.eer={}", m.eer);
        let _ = writeln!(out, "mean.auc={}", m.auc);
        out
    }

    pub fn to_table(&self) -> String {
        let pct = |v: Option<f64>| v.map_or("    -".to_string(), |v| format!("{:6.2}", 100.0 * v));
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<12} {:>8} {:>8} {:>10} {:>6} {:>6} {:>6} {:>6} {:>6}",
            "test", "dev EER", "C", "threshold", "APCER", "BPCER", "ACER", "EER", "AUC"
        );
        for f in &self.folds {
            let _ = writeln!(
                out,
                "{:<12} {:>8} {:>8} {:>10.4} {:>6} {:>6} {:>6} {:>6} {:>6}",
                f.test_subject,
                pct(Some(f.dev_eer)),
                f.c,
                f.threshold,
                pct(f.test.map(|r| r.apcer)),
                pct(f.test.map(|r| r.bpcer)),
                pct(f.test.map(|r| r.acer)),
                pct(f.test_eer),
                pct(f.test_auc),
            );
        }
        let m = &self.mean;
        let _ = writeln!(
            out,
            "{:<12} {:>8} {:>8} {:>10} {:>6} {:>6} {:>6} {:>6} {:>6}",
            "mean",
            "",
            "",
            "",
            pct(Some(m.apcer)),
            pct(Some(m.bpcer)),
            pct(Some(m.acer)),
            pct(Some(m.eer)),
            pct(Some(m.auc)),
        );
        let _ = writeln!(
            out,
            "(rates in percent; feature length {})",
            self.feature_length
        );
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_kv()).map_err(|e| Error::io(path, e))
    }
}
