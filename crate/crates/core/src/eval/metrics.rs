use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::ingest::Label;

/// Labeled scores; higher means more likely bona fide.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreSet {
    bona: Vec<f64>,
    attack: Vec<f64>,
}

impl ScoreSet {
    pub fn new(scores: impl IntoIterator<Item = (f64, Label)>) -> Result<Self> {
        let mut bona = Vec::new();
        let mut attack = Vec::new();
        for (s, l) in scores {
            if !s.is_finite() {
                return Err(Error::invalid(format!("non-finite score {s}")));
            }
            match l {
                Label::BonaFide => bona.push(s),
                Label::Attack => attack.push(s),
            }
        }
        if bona.is_empty() && attack.is_empty() {
            return Err(Error::invalid("empty score set"));
        }
        bona.sort_by(f64::total_cmp);
        attack.sort_by(f64::total_cmp);
        Ok(ScoreSet { bona, attack })
    }

    pub fn from_parts(bona: &[f64], attack: &[f64]) -> Result<Self> {
        Self::new(
            bona.iter()
                .map(|&s| (s, Label::BonaFide))
                .chain(attack.iter().map(|&s| (s, Label::Attack))),
        )
    }

    /// Sorted ascending.
    pub fn bona_fide(&self) -> &[f64] {
        &self.bona
    }

    /// Sorted ascending.
    pub fn attack(&self) -> &[f64] {
        &self.attack
    }

    pub fn len(&self) -> usize {
        self.bona.len() + self.attack.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn has_both_labels(&self) -> bool {
        !self.bona.is_empty() && !self.attack.is_empty()
    }

    fn require_both(&self) -> Result<()> {
        if self.has_both_labels() {
            Ok(())
        } else {
            Err(Error::invalid(
                "metric needs both bona fide and attack scores",
            ))
        }
    }

    /// Fraction of attacks with score `>= tau`.
    pub fn far(&self, tau: f64) -> f64 {
        let below = self.attack.partition_point(|&s| s < tau);
        (self.attack.len() - below) as f64 / self.attack.len() as f64
    }

    /// Fraction of bona fide with score `< tau`.
    pub fn frr(&self, tau: f64) -> f64 {
        self.bona.partition_point(|&s| s < tau) as f64 / self.bona.len() as f64
    }

    /// `-inf`, midpoints of consecutive distinct scores, `+inf`; ascending.
    pub fn candidate_thresholds(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self.bona.iter().chain(&self.attack).copied().collect();
        all.sort_by(f64::total_cmp);
        all.dedup();
        let mut out = Vec::with_capacity(all.len() + 1);
        out.push(f64::NEG_INFINITY);
        out.extend(all.windows(2).map(|w| (w[0] + w[1]) / 2.0));
        out.push(f64::INFINITY);
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rates {
    pub apcer: f64,
    pub bpcer: f64,
    pub acer: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
}

/// Equal error rate and its threshold. Among candidate thresholds the one
/// with the smallest `|FAR - FRR|` wins, then the smallest threshold.
pub fn eer(s: &ScoreSet) -> Result<(f64, f64)> {
    s.require_both()?;
    let mut best: Option<(f64, f64, f64)> = None;
    for tau in s.candidate_thresholds() {
        let (far, frr) = (s.far(tau), s.frr(tau));
        let diff = (far - frr).abs();
        if best.is_none_or(|(d, _, _)| diff < d) {
            best = Some((diff, tau, (far + frr) / 2.0));
        }
    }
    let (_, tau, rate) = best.expect("at least two candidate thresholds");
    Ok((rate, tau))
}

/// Probability that a bona fide score exceeds an attack score, ties
/// counting one half.
pub fn auc(s: &ScoreSet) -> Result<f64> {
    s.require_both()?;
    let mut wins = 0.0;
    let mut lo = 0;
    let mut hi = 0;
    // Both lists are sorted, so the counts below and equal advance monotonically.
    for &b in &s.bona {
        while lo < s.attack.len() && s.attack[lo] < b {
            lo += 1;
        }
        hi = hi.max(lo);
        while hi < s.attack.len() && s.attack[hi] <= b {
            hi += 1;
        }
        wins += lo as f64 + 0.5 * (hi - lo) as f64;
    }
    Ok(wins / (s.bona.len() as f64 * s.attack.len() as f64))
}

pub fn apcer_bpcer(s: &ScoreSet, tau: f64) -> Result<Rates> {
    s.require_both()?;
    let apcer = s.far(tau);
    let bpcer = s.frr(tau);
    Ok(Rates {
        apcer,
        bpcer,
        acer: (apcer + bpcer) / 2.0,
    })
}

pub fn roc_points(s: &ScoreSet) -> Result<Vec<RocPoint>> {
    s.require_both()?;
    Ok(s.candidate_thresholds()
        .into_iter()
        .map(|threshold| RocPoint {
            threshold,
            far: s.far(threshold),
            frr: s.frr(threshold),
        })
        .collect())
}

/// `threshold,far,frr` rows with a header line.
pub fn roc_csv(points: &[RocPoint]) -> String {
    let mut out = String::from("threshold,far,frr\n");
    for p in points {
        let _ = writeln!(out, "{},{},{}", p.threshold, p.far, p.frr);
    }
    out
}
