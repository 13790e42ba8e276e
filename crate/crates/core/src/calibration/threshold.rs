use serde::{Deserialize, Serialize};

use super::CalibrationError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YoudenCut {
    /// Classify positive when `score >= threshold`. May be ±∞.
    pub threshold: f64,
    /// `TPR − FPR` at the threshold.
    pub j: f64,
}

fn check_inputs(scores: &[f64], labels: &[bool]) -> Result<(), CalibrationError> {
    if scores.len() != labels.len() {
        return Err(CalibrationError::LengthMismatch { scores: scores.len(), labels: labels.len() });
    }
    if scores.is_empty() {
        return Err(CalibrationError::EmptyInput);
    }
    if let Some(index) = scores.iter().position(|s| !s.is_finite()) {
        return Err(CalibrationError::NonFiniteScore { index });
    }
    Ok(())
}

/// Threshold maximizing Youden's J.
///
/// Candidates are `-∞`, the midpoints between consecutive distinct scores, and
/// `+∞`; among equal J the smallest candidate wins.
pub fn youden_threshold(scores: &[f64], labels: &[bool]) -> Result<YoudenCut, CalibrationError> {
    check_inputs(scores, labels)?;
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(CalibrationError::DegenerateLabels);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // (value, positives, negatives) per distinct score, ascending.
    let mut groups: Vec<(f64, usize, usize)> = Vec::new();
    for i in order {
        match groups.last_mut() {
            Some(g) if g.0 == scores[i] => {
                if labels[i] {
                    g.1 += 1
                } else {
                    g.2 += 1
                }
            }
            _ => groups.push((scores[i], usize::from(labels[i]), usize::from(!labels[i]))),
        }
    }

    // At -∞ everything is positive: TPR = FPR = 1.
    let mut best = YoudenCut { threshold: f64::NEG_INFINITY, j: 0.0 };
    let (mut tp, mut fp) = (positives, negatives);
    for pair in groups.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        tp -= lo.1;
        fp -= lo.2;
        let j = tp as f64 / positives as f64 - fp as f64 / negatives as f64;
        if j > best.j {
            let mut mid = (lo.0 + hi.0) / 2.0;
            if mid <= lo.0 {
                mid = hi.0;
            }
            best = YoudenCut { threshold: mid, j };
        }
    }
    // +∞ has J = 0 and never beats an earlier candidate.
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when a rate's denominator was zero and the rate was reported as 0.
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    pub f1_undefined: bool,
}

impl ClassificationMetrics {
    pub fn false_positive_rate(&self) -> f64 {
        let negatives = self.fp + self.tn;
        if negatives == 0 {
            0.0
        } else {
            self.fp as f64 / negatives as f64
        }
    }
}

fn ratio(num: f64, den: f64) -> (f64, bool) {
    if den == 0.0 {
        (0.0, true)
    } else {
        (num / den, false)
    }
}

pub fn classification_metrics(
    scores: &[f64],
    labels: &[bool],
    threshold: f64,
) -> Result<ClassificationMetrics, CalibrationError> {
    check_inputs(scores, labels)?;
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let accuracy = (tp + tn) as f64 / scores.len() as f64;
    let (precision, precision_undefined) = ratio(tp as f64, (tp + fp) as f64);
    let (recall, recall_undefined) = ratio(tp as f64, (tp + fn_) as f64);
    let (f1, f1_undefined) = ratio(2.0 * precision * recall, precision + recall);
    Ok(ClassificationMetrics {
        tp,
        fp,
        tn,
        fn_,
        accuracy,
        precision,
        recall,
        f1,
        precision_undefined,
        recall_undefined,
        f1_undefined,
    })
}
