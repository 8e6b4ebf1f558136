use serde::{Deserialize, Serialize};

use super::DetectorError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Scores strictly above this are classified as fraud.
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Roc {
    /// Ordered from the strictest threshold to the loosest.
    pub points: Vec<RocPoint>,
    pub auc: f64,
    /// Threshold maximizing Youden's J = tpr - fpr.
    pub best_threshold: f64,
    pub best_j: f64,
}

/// ROC over every distinct score cut. `scored` pairs a score with whether
/// the sample is fraud. Candidate thresholds sit at the largest score and
/// halfway between consecutive distinct scores; ties are handled by moving
/// all tied samples together.
pub fn sweep_roc(scored: &[(f64, bool)]) -> Result<Roc, DetectorError> {
    let pos = scored.iter().filter(|s| s.1).count();
    let neg = scored.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(DetectorError::SingleClass);
    }
    if scored.iter().any(|s| !s.0.is_finite()) {
        return Err(DetectorError::NonFiniteScore);
    }
    let mut sorted: Vec<(f64, bool)> = scored.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));

    let (p, n) = (pos as f64, neg as f64);
    let mut points = vec![RocPoint {
        threshold: sorted[0].0,
        tpr: 0.0,
        fpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let s = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == s {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        // everything scoring >= s is now flagged
        let threshold = match sorted.get(i) {
            Some(next) => 0.5 * (s + next.0),
            None => f64::NEG_INFINITY,
        };
        points.push(RocPoint {
            threshold,
            tpr: tp as f64 / p,
            fpr: fp as f64 / n,
        });
    }
    let auc = points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * 0.5 * (w[1].tpr + w[0].tpr))
        .sum();
    let mut best = points[0];
    for pt in &points[1..points.len() - 1] {
        if pt.tpr - pt.fpr > best.tpr - best.fpr {
            best = *pt;
        }
    }
    Ok(Roc {
        points,
        auc,
        best_threshold: best.threshold,
        best_j: best.tpr - best.fpr,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    /// `pairs` holds (predicted fraud, actually fraud).
    pub fn from_pairs(pairs: impl IntoIterator<Item = (bool, bool)>) -> Self {
        let mut c = Self::default();
        for (pred, actual) in pairs {
            match (pred, actual) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    fn ratio(a: usize, b: usize) -> f64 {
        if b == 0 {
            0.0
        } else {
            a as f64 / b as f64
        }
    }

    pub fn precision(&self) -> f64 {
        Self::ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        Self::ratio(self.tp, self.tp + self.fn_)
    }

    pub fn accuracy(&self) -> f64 {
        Self::ratio(self.tp + self.tn, self.total())
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

/// Best F1 over every threshold cut.
pub fn best_f1(scored: &[(f64, bool)]) -> f64 {
    let mut thresholds: Vec<f64> = scored.iter().map(|s| s.0).collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let mut best: f64 = 0.0;
    // also consider flagging everything
    let below = thresholds.first().map_or(0.0, |m| m - 1.0);
    for t in std::iter::once(below).chain(thresholds) {
        let c = Confusion::from_pairs(scored.iter().map(|&(s, y)| (s > t, y)));
        best = best.max(c.f1());
    }
    best
}
