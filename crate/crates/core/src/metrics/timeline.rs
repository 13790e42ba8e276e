use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{window_metrics, MetricsError, MinMax, WindowMetrics, WindowValues};
use crate::event_store::{EventLog, InteractionEvent, SECONDS_PER_DAY};

/// Composite weights for diversity, dominance and recurrence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self { alpha: 1.0 / 3.0, beta: 1.0 / 3.0, gamma: 1.0 / 3.0 }
    }
}

/// `α(1 − h̃) + β·d̃ + γ(1 − r̃)` over MinMax-normalized components.
pub fn fixation_score(h: f64, d: f64, r: f64, weights: &Weights) -> f64 {
    weights.alpha * (1.0 - h) + weights.beta * d + weights.gamma * (1.0 - r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineConfig {
    pub k: usize,
    pub w_days: u32,
    pub step_days: u32,
    pub weights: Weights,
}

impl TimelineConfig {
    pub fn new(k: usize) -> Self {
        Self { k, w_days: 7, step_days: 1, weights: Weights::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedComponents {
    pub h: f64,
    pub d: f64,
    pub r: f64,
    /// Recurrence was undefined for this window and `r` holds the neutral 0.5.
    pub recurrence_imputed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelinePoint {
    pub t_end: i64,
    pub n_events: usize,
    /// `None` marks a gap (no events in the window).
    pub values: Option<WindowValues>,
    pub normalized: Option<NormalizedComponents>,
    pub fixation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixationTimeline {
    pub user_id: String,
    pub w_days: u32,
    pub step_days: u32,
    pub weights: Weights,
    pub points: Vec<TimelinePoint>,
}

/// Window end times for one history.
///
/// The first window is `(t₀ − 1, t₀ − 1 + w]` where `t₀` is the first event, so
/// it opens on that event; windows then advance by `step` until one reaches the
/// last event. A span shorter than `w` yields a single window.
pub fn window_ends(history: &[InteractionEvent], w_days: u32, step_days: u32) -> Vec<i64> {
    let (Some(first), Some(last)) = (history.first(), history.last()) else {
        return Vec::new();
    };
    let step = i64::from(step_days.max(1)) * SECONDS_PER_DAY;
    let mut t = first.timestamp - 1 + i64::from(w_days) * SECONDS_PER_DAY;
    let mut ends = vec![t];
    while t < last.timestamp {
        t += step;
        ends.push(t);
    }
    ends
}

fn raw_windows(log: &EventLog, user: &str, config: &TimelineConfig) -> Result<Vec<WindowMetrics>, MetricsError> {
    window_ends(log.history(user)?, config.w_days, config.step_days)
        .into_iter()
        .map(|t| window_metrics(log, user, t, config.w_days, config.k))
        .collect()
}

struct Scalers {
    h: Option<MinMax>,
    d: Option<MinMax>,
    r: Option<MinMax>,
}

impl Scalers {
    fn fit(windows: &[(String, Vec<WindowMetrics>)]) -> Self {
        let values = || windows.iter().flat_map(|(_, w)| w.iter().filter_map(|m| m.values));
        Scalers {
            h: MinMax::fit(values().map(|v| v.diversity_norm)),
            d: MinMax::fit(values().map(|v| v.dominance)),
            r: MinMax::fit(values().filter_map(|v| v.recurrence)),
        }
    }

    fn point(&self, m: &WindowMetrics, weights: &Weights) -> TimelinePoint {
        let normalized = m.values.map(|v| {
            let h = self.h.expect("fitted on this window").apply(v.diversity_norm);
            let d = self.d.expect("fitted on this window").apply(v.dominance);
            let (r, recurrence_imputed) = match (v.recurrence, self.r) {
                (Some(r), Some(scaler)) => (scaler.apply(r), false),
                _ => (0.5, true),
            };
            NormalizedComponents { h, d, r, recurrence_imputed }
        });
        TimelinePoint {
            t_end: m.t_end,
            n_events: m.n_events,
            values: m.values,
            fixation: normalized.map(|c| fixation_score(c.h, c.d, c.r, weights)),
            normalized,
        }
    }
}

/// Timelines for `users`, with MinMax ranges fitted jointly over every
/// non-empty window of every listed user.
pub fn score_users<S: AsRef<str> + Sync>(
    log: &EventLog,
    users: &[S],
    config: &TimelineConfig,
) -> Result<Vec<FixationTimeline>, MetricsError> {
    if config.step_days == 0 {
        return Err(MetricsError::InvalidStep(0));
    }
    if config.k < 2 {
        return Err(MetricsError::DegenerateK(config.k));
    }
    let raw: Vec<(String, Vec<WindowMetrics>)> = users
        .par_iter()
        .map(|u| Ok((u.as_ref().to_owned(), raw_windows(log, u.as_ref(), config)?)))
        .collect::<Result<_, MetricsError>>()?;
    let scalers = Scalers::fit(&raw);
    Ok(raw
        .into_iter()
        .map(|(user_id, windows)| FixationTimeline {
            user_id,
            w_days: config.w_days,
            step_days: config.step_days,
            weights: config.weights,
            points: windows.iter().map(|m| scalers.point(m, &config.weights)).collect(),
        })
        .collect())
}

/// Timelines for every user in the log.
pub fn score_population(log: &EventLog, config: &TimelineConfig) -> Result<Vec<FixationTimeline>, MetricsError> {
    let users: Vec<&str> = log.users().collect();
    score_users(log, &users, config)
}

/// One user's timeline, normalized over that user's own windows.
pub fn score_timeline(log: &EventLog, user: &str, config: &TimelineConfig) -> Result<FixationTimeline, MetricsError> {
    Ok(score_users(log, &[user], config)?.remove(0))
}

const TIMELINE_HEADER: [&str; 11] = [
    "user_id",
    "t_end",
    "n_events",
    "diversity_raw",
    "diversity_norm",
    "dominance",
    "recurrence",
    "h_norm_mm",
    "d_mm",
    "r_mm",
    "fixation",
];

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_timeline_csv<W: Write>(timelines: &[FixationTimeline], out: W) -> csv::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(TIMELINE_HEADER)?;
    for timeline in timelines {
        for p in &timeline.points {
            let v = p.values;
            let n = p.normalized;
            writer.write_record([
                timeline.user_id.clone(),
                p.t_end.to_string(),
                p.n_events.to_string(),
                opt(v.map(|v| v.diversity_raw)),
                opt(v.map(|v| v.diversity_norm)),
                opt(v.map(|v| v.dominance)),
                opt(v.and_then(|v| v.recurrence)),
                opt(n.map(|n| n.h)),
                opt(n.map(|n| n.d)),
                opt(n.map(|n| n.r)),
                opt(p.fixation),
            ])?;
        }
    }
    writer.flush()?;
    Ok(())
}
