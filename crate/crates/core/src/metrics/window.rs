use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{hhi_dominance, shannon_diversity, user_recurrence, MetricsError};
use crate::event_store::{EventLog, InteractionEvent};

/// Per-cluster tag counts for one user and window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowProportions {
    pub user_id: String,
    pub t_end: i64,
    pub w_days: u32,
    pub counts: Vec<u64>,
    pub total: u64,
    /// `counts / total`; `None` for an empty window.
    pub p: Option<Vec<f64>>,
}

pub(crate) fn clusters_of(event: &InteractionEvent, k: usize) -> Result<&[u32], MetricsError> {
    let ids = event.cluster_ids.as_deref().ok_or_else(|| MetricsError::MissingClusters {
        user_id: event.user_id.clone(),
        content_id: event.content_id.clone(),
        timestamp: event.timestamp,
    })?;
    if let Some(&cluster) = ids.iter().find(|&&c| c as usize >= k) {
        return Err(MetricsError::ClusterOutOfRange {
            user_id: event.user_id.clone(),
            content_id: event.content_id.clone(),
            timestamp: event.timestamp,
            cluster,
            k,
        });
    }
    Ok(ids)
}

pub(crate) fn proportions_of(events: &[InteractionEvent], k: usize) -> Result<(Vec<u64>, u64), MetricsError> {
    let mut counts = vec![0u64; k];
    for event in events {
        for &c in clusters_of(event, k)? {
            counts[c as usize] += 1;
        }
    }
    let total = counts.iter().sum();
    Ok((counts, total))
}

pub fn window_proportions(
    log: &EventLog,
    user: &str,
    t_end: i64,
    w_days: u32,
    k: usize,
) -> Result<WindowProportions, MetricsError> {
    let events = log.slice_window(user, t_end, w_days)?;
    let (counts, total) = proportions_of(events, k)?;
    let p = (total > 0).then(|| counts.iter().map(|&c| c as f64 / total as f64).collect());
    Ok(WindowProportions { user_id: user.to_owned(), t_end, w_days, counts, total, p })
}

/// Raw components of a non-empty window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowValues {
    /// Shannon entropy in nats.
    pub diversity_raw: f64,
    /// Entropy divided by `ln K`.
    pub diversity_norm: f64,
    pub dominance: f64,
    /// Aggregated burstiness; `None` when no cluster has three or more items.
    pub recurrence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowMetrics {
    pub user_id: String,
    pub t_end: i64,
    /// Items in the window.
    pub n_events: usize,
    /// Distinct clusters with at least one tag in the window.
    pub active_clusters: usize,
    /// `None` marks an empty window.
    pub values: Option<WindowValues>,
}

pub fn window_metrics(
    log: &EventLog,
    user: &str,
    t_end: i64,
    w_days: u32,
    k: usize,
) -> Result<WindowMetrics, MetricsError> {
    if k < 2 {
        return Err(MetricsError::DegenerateK(k));
    }
    let events = log.slice_window(user, t_end, w_days)?;
    let (counts, total) = proportions_of(events, k)?;
    let active_clusters = counts.iter().filter(|&&c| c > 0).count();
    let values = if total == 0 {
        None
    } else {
        // Sorted so that the sums do not depend on cluster labels.
        let mut sorted: Vec<u64> = counts.iter().copied().filter(|&c| c > 0).collect();
        sorted.sort_unstable();
        let p: Vec<f64> = sorted.iter().map(|&c| c as f64 / total as f64).collect();
        let (diversity_raw, diversity_norm) = shannon_diversity(&p, k)?;
        Some(WindowValues {
            diversity_raw,
            diversity_norm,
            dominance: hhi_dominance(&p),
            recurrence: user_recurrence(log, user, t_end, w_days, k)?,
        })
    };
    Ok(WindowMetrics { user_id: user.to_owned(), t_end, n_events: events.len(), active_clusters, values })
}

/// Distinct clusters touched by an item, ascending.
pub(crate) fn item_clusters(event: &InteractionEvent, k: usize) -> Result<BTreeSet<u32>, MetricsError> {
    Ok(clusters_of(event, k)?.iter().copied().collect())
}
