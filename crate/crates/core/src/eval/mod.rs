//! Presentation-attack metrics and the leave-one-subject-out protocol.
//!
//! Scores are oriented so that bona fide is high. A threshold `tau`
//! accepts a presentation as bona fide when `score >= tau`.

mod metrics;
mod report;

use std::collections::BTreeSet;

pub use metrics::{apcer_bpcer, auc, eer, roc_csv, roc_points, Rates, RocPoint, ScoreSet};
pub use report::{Aggregate, EvalReport, FoldRecord, REPORT_FORMAT};

use crate::error::{Error, Result};
use crate::ingest::DatasetManifest;

/// C values tried when tuning on the dev split.
pub const C_GRID: [f64; 4] = [0.01, 0.1, 1.0, 10.0];

/// Subject partition of one fold.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fold {
    pub test: String,
    pub train: Vec<String>,
    pub dev: Vec<String>,
}

impl Fold {
    /// Fails unless the subject groups are non-empty and pairwise disjoint.
    pub fn check_disjoint(&self) -> Result<()> {
        let train: BTreeSet<&String> = self.train.iter().collect();
        let dev: BTreeSet<&String> = self.dev.iter().collect();
        let ok = !train.is_empty()
            && !dev.is_empty()
            && train.len() == self.train.len()
            && dev.len() == self.dev.len()
            && train.is_disjoint(&dev)
            && !train.contains(&self.test)
            && !dev.contains(&self.test);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidState(format!(
                "fold for {} is not subject-disjoint",
                self.test
            )))
        }
    }
}

/// One fold per subject. The other subjects, sorted, go alternately to
/// train and dev (train first), so train gets the extra one when odd.
pub fn plan_folds(subjects: &[String]) -> Result<Vec<Fold>> {
    let sorted: Vec<String> = subjects
        .iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if sorted.len() < 3 {
        return Err(Error::invalid(format!(
            "leave-one-subject-out needs at least 3 subjects, got {}",
            sorted.len()
        )));
    }
    sorted
        .iter()
        .map(|test| {
            let rest: Vec<&String> = sorted.iter().filter(|s| *s != test).collect();
            let fold = Fold {
                test: test.clone(),
                train: rest.iter().step_by(2).map(|s| (*s).clone()).collect(),
                dev: rest
                    .iter()
                    .skip(1)
                    .step_by(2)
                    .map(|s| (*s).clone())
                    .collect(),
            };
            fold.check_disjoint()?;
            Ok(fold)
        })
        .collect()
}

/// Folds for a manifest's subjects.
pub fn manifest_folds(manifest: &DatasetManifest) -> Result<Vec<Fold>> {
    plan_folds(&manifest.subjects())
}
pub use crate::pipeline::loocv;
