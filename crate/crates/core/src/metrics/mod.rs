//! Windowed diversity, dominance and recurrence, and the composite fixation score.
//!
//! Topic proportions count one increment per topic tag, so an item carrying
//! `m` tags contributes `m` increments. Recurrence is measured on items: an item
//! touching a cluster through several tags is one re-engagement with it.

mod concentration;
mod normalize;
mod recurrence;
mod summary;
mod timeline;
mod window;

pub use concentration::{hhi_dominance, shannon_diversity};
pub use normalize::{minmax_normalize, minmax_normalize_partial, MinMax};
pub use recurrence::{burstiness, user_recurrence};
pub use summary::{read_user_summaries, summarize, write_user_summaries, Histogram, UserSummary};
pub use timeline::{
    fixation_score, score_population, score_timeline, score_users, window_ends, write_timeline_csv, FixationTimeline,
    NormalizedComponents, TimelineConfig, TimelinePoint, Weights,
};
pub use window::{window_metrics, window_proportions, WindowMetrics, WindowProportions, WindowValues};

use crate::event_store::EventStoreError;

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error(transparent)]
    EventStore(#[from] EventStoreError),
    #[error("event {content_id} of user {user_id} at {timestamp} has no cluster ids")]
    MissingClusters { user_id: String, content_id: String, timestamp: i64 },
    #[error("event {content_id} of user {user_id} at {timestamp} has cluster {cluster} outside [0, {k})")]
    ClusterOutOfRange { user_id: String, content_id: String, timestamp: i64, cluster: u32, k: usize },
    #[error("normalized entropy needs K >= 2, got K = {0}")]
    DegenerateK(usize),
    #[error("MinMax normalization needs at least one finite value")]
    EmptyInput,
    #[error("step must be positive, got {0} days")]
    InvalidStep(u32),
}
