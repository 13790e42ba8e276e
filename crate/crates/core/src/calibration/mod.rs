//! From fixation scores to a fixated / not-fixated decision, validated against
//! annotator gold labels.

mod agreement;
mod cv;
mod threshold;

pub use agreement::{fleiss_kappa, load_gold_labels, majority_vote, write_gold_jsonl, GoldLabel, GoldLabelSet};
pub use cv::{
    ablate, cross_validate, cross_validate_scores, cross_validate_user_scores, stratified_folds, write_calibration_csv,
    write_folds_csv, CalibrationResult, ComponentScores, CvConfig, CvSummary, FoldResult, MeanStd, MetricSubset,
};
pub use threshold::{classification_metrics, youden_threshold, ClassificationMetrics, YoudenCut};

#[derive(Debug, thiserror::Error)]
pub enum CalibrationError {
    #[error("majority vote needs an odd, non-zero number of votes, got {0}")]
    EvenVotes(usize),
    #[error("vote matrix row {row} sums to {found}, expected {expected}")]
    InconsistentRows { row: usize, expected: u64, found: u64 },
    #[error("Fleiss' kappa needs at least 2 raters per item, got {0}")]
    TooFewRaters(u64),
    #[error("no items to evaluate")]
    EmptyInput,
    #[error("labels contain a single class")]
    DegenerateLabels,
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("score {index} is not finite")]
    NonFiniteScore { index: usize },
    #[error("class {class} has {count} users, fewer than {folds} folds")]
    ClassTooSmall { class: bool, count: usize, folds: usize },
    #[error("invalid cross-validation configuration: {0}")]
    InvalidConfig(String),
    #[error("no scores for gold-labelled user '{0}'")]
    MissingScore(String),
    #[error("user '{0}' appears twice in the gold labels")]
    DuplicateUser(String),
    #[error("gold labels line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("failed reading gold labels: {0}")]
    Io(#[from] std::io::Error),
}
