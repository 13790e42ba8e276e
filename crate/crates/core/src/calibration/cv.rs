use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{classification_metrics, youden_threshold, CalibrationError, ClassificationMetrics, GoldLabelSet};
use crate::metrics::UserSummary;
use crate::rng;

/// Fold index for every item. Each class is shuffled and dealt round-robin, the
/// deal continuing across classes so fold sizes stay balanced too.
pub fn stratified_folds(labels: &[bool], folds: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut fold_of = vec![0; labels.len()];
    let mut offset = 0;
    for class in [true, false] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(rng);
        for (j, &i) in members.iter().enumerate() {
            fold_of[i] = (offset + j) % folds;
        }
        offset = (offset + members.len()) % folds;
    }
    fold_of
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self { folds: 3, repeats: 10, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub repeat: usize,
    pub fold: usize,
    /// Fitted on the training folds.
    pub threshold: f64,
    pub train_j: f64,
    /// Held-out fold.
    pub metrics: ClassificationMetrics,
    pub test_j: f64,
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let values: Vec<f64> = values.into_iter().collect();
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
        MeanStd { mean, std }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub threshold: MeanStd,
    pub accuracy: MeanStd,
    pub precision: MeanStd,
    pub recall: MeanStd,
    pub f1: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub subset: String,
    pub config: CvConfig,
    pub folds: Vec<FoldResult>,
    pub summary: CvSummary,
}

impl CalibrationResult {
    /// Fold results of one repeat.
    pub fn repeat(&self, r: usize) -> impl Iterator<Item = &FoldResult> {
        self.folds.iter().filter(move |f| f.repeat == r)
    }
}

/// Stratified `folds × repeats` cross-validation of a threshold rule.
///
/// Repeat `r` shuffles with seed `seed + r`. In each fold the Youden threshold
/// is fitted on the remaining folds and scored on the held-out one.
pub fn cross_validate_scores(
    subset: &str,
    scores: &[f64],
    labels: &[bool],
    config: &CvConfig,
) -> Result<CalibrationResult, CalibrationError> {
    if scores.len() != labels.len() {
        return Err(CalibrationError::LengthMismatch { scores: scores.len(), labels: labels.len() });
    }
    if config.folds < 2 || config.repeats == 0 {
        return Err(CalibrationError::InvalidConfig(format!(
            "need folds >= 2 and repeats >= 1, got {} folds and {} repeats",
            config.folds, config.repeats
        )));
    }
    for class in [true, false] {
        let count = labels.iter().filter(|&&l| l == class).count();
        if count < config.folds {
            return Err(CalibrationError::ClassTooSmall { class, count, folds: config.folds });
        }
    }

    let per_repeat: Vec<Vec<FoldResult>> = (0..config.repeats)
        .into_par_iter()
        .map(|repeat| {
            let mut rng = rng::stream(config.seed.wrapping_add(repeat as u64), 0);
            let fold_of = stratified_folds(labels, config.folds, &mut rng);
            (0..config.folds)
                .map(|fold| {
                    let split = |held_out: bool| -> (Vec<f64>, Vec<bool>) {
                        (0..scores.len())
                            .filter(|&i| (fold_of[i] == fold) == held_out)
                            .map(|i| (scores[i], labels[i]))
                            .unzip()
                    };
                    let (train_s, train_l) = split(false);
                    let (test_s, test_l) = split(true);
                    let cut = youden_threshold(&train_s, &train_l)?;
                    let metrics = classification_metrics(&test_s, &test_l, cut.threshold)?;
                    Ok(FoldResult {
                        repeat,
                        fold,
                        threshold: cut.threshold,
                        train_j: cut.j,
                        test_j: metrics.recall - metrics.false_positive_rate(),
                        metrics,
                    })
                })
                .collect::<Result<Vec<_>, CalibrationError>>()
        })
        .collect::<Result<_, _>>()?;
    let folds: Vec<FoldResult> = per_repeat.into_iter().flatten().collect();

    let summary = CvSummary {
        threshold: MeanStd::of(folds.iter().map(|f| f.threshold)),
        accuracy: MeanStd::of(folds.iter().map(|f| f.metrics.accuracy)),
        precision: MeanStd::of(folds.iter().map(|f| f.metrics.precision)),
        recall: MeanStd::of(folds.iter().map(|f| f.metrics.recall)),
        f1: MeanStd::of(folds.iter().map(|f| f.metrics.f1)),
    };
    Ok(CalibrationResult { subset: subset.to_owned(), config: *config, folds, summary })
}

/// MinMax-normalized per-user component means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentScores {
    pub h: f64,
    pub d: f64,
    pub r: f64,
}

impl From<&UserSummary> for ComponentScores {
    fn from(s: &UserSummary) -> Self {
        ComponentScores { h: s.h_mm_mean, d: s.d_mm_mean, r: s.r_mm_mean }
    }
}

/// Metric combinations evaluated in the ablation grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MetricSubset {
    Diversity,
    Dominance,
    Recurrence,
    DivDom,
    DivRec,
    DomRec,
    All,
}

impl MetricSubset {
    pub const GRID: [MetricSubset; 7] = [
        MetricSubset::Diversity,
        MetricSubset::Dominance,
        MetricSubset::Recurrence,
        MetricSubset::DivDom,
        MetricSubset::DivRec,
        MetricSubset::DomRec,
        MetricSubset::All,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Diversity => "Diversity",
            Self::Dominance => "Dominance",
            Self::Recurrence => "Recurrence",
            Self::DivDom => "Div.+Dom.",
            Self::DivRec => "Div.+Rec.",
            Self::DomRec => "Dom.+Rec.",
            Self::All => "All",
        }
    }

    /// Which of (diversity, dominance, recurrence) are included.
    pub fn components(&self) -> [bool; 3] {
        match self {
            Self::Diversity => [true, false, false],
            Self::Dominance => [false, true, false],
            Self::Recurrence => [false, false, true],
            Self::DivDom => [true, true, false],
            Self::DivRec => [true, false, true],
            Self::DomRec => [false, true, true],
            Self::All => [true, true, true],
        }
    }

    /// Equal-weight mean of the included components, each oriented so that
    /// higher means more fixated: `1 − h̃`, `d̃`, `1 − r̃`.
    pub fn score(&self, c: &ComponentScores) -> f64 {
        let oriented = [1.0 - c.h, c.d, 1.0 - c.r];
        let included = self.components();
        let n = included.iter().filter(|&&b| b).count() as f64;
        oriented.iter().zip(included).filter(|(_, b)| *b).map(|(v, _)| v).sum::<f64>() / n
    }
}

fn joined<T: Copy>(cohort: &BTreeMap<String, T>, gold: &GoldLabelSet) -> Result<(Vec<T>, Vec<bool>), CalibrationError> {
    gold.iter()
        .map(|(user, label)| {
            cohort
                .get(user)
                .map(|&s| (s, label.majority))
                .ok_or_else(|| CalibrationError::MissingScore(user.to_owned()))
        })
        .collect::<Result<Vec<_>, _>>()
        .map(|pairs| pairs.into_iter().unzip())
}

/// Cross-validates one metric subset over every gold-labelled user.
pub fn cross_validate(
    cohort: &BTreeMap<String, ComponentScores>,
    gold: &GoldLabelSet,
    subset: MetricSubset,
    config: &CvConfig,
) -> Result<CalibrationResult, CalibrationError> {
    let (components, labels) = joined(cohort, gold)?;
    let scores: Vec<f64> = components.iter().map(|c| subset.score(c)).collect();
    cross_validate_scores(subset.name(), &scores, &labels, config)
}

/// The seven-subset grid, all on the same folds.
pub fn ablate(
    cohort: &BTreeMap<String, ComponentScores>,
    gold: &GoldLabelSet,
    config: &CvConfig,
) -> Result<Vec<CalibrationResult>, CalibrationError> {
    MetricSubset::GRID.iter().map(|&s| cross_validate(cohort, gold, s, config)).collect()
}

/// Per-user scalar scores (e.g. mean fixation) against gold labels.
pub fn cross_validate_user_scores(
    subset: &str,
    scores: &BTreeMap<String, f64>,
    gold: &GoldLabelSet,
    config: &CvConfig,
) -> Result<CalibrationResult, CalibrationError> {
    let (scores, labels) = joined(scores, gold)?;
    cross_validate_scores(subset, &scores, &labels, config)
}

pub fn write_calibration_csv<W: Write>(results: &[CalibrationResult], out: W) -> csv::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record([
        "subset",
        "tau_mean",
        "tau_std",
        "acc_mean",
        "acc_std",
        "prec_mean",
        "prec_std",
        "rec_mean",
        "rec_std",
        "f1_mean",
        "f1_std",
    ])?;
    for r in results {
        let s = &r.summary;
        let mut row = vec![r.subset.clone()];
        for m in [s.threshold, s.accuracy, s.precision, s.recall, s.f1] {
            row.push(m.mean.to_string());
            row.push(m.std.to_string());
        }
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_folds_csv<W: Write>(results: &[CalibrationResult], out: W) -> csv::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record([
        "subset",
        "repeat",
        "fold",
        "threshold",
        "train_j",
        "accuracy",
        "precision",
        "recall",
        "f1",
        "test_j",
        "precision_undefined",
        "f1_undefined",
    ])?;
    for r in results {
        for f in &r.folds {
            writer.write_record([
                r.subset.clone(),
                f.repeat.to_string(),
                f.fold.to_string(),
                f.threshold.to_string(),
                f.train_j.to_string(),
                f.metrics.accuracy.to_string(),
                f.metrics.precision.to_string(),
                f.metrics.recall.to_string(),
                f.metrics.f1.to_string(),
                f.test_j.to_string(),
                f.metrics.precision_undefined.to_string(),
                f.metrics.f1_undefined.to_string(),
            ])?;
        }
    }
    writer.flush()?;
    Ok(())
}
