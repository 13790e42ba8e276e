use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::FixationTimeline;

/// Per-user means over the non-empty windows of a timeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSummary {
    pub user_id: String,
    pub n_windows: usize,
    pub diversity_mean: f64,
    pub dominance_mean: f64,
    pub recurrence_mean: Option<f64>,
    pub h_mm_mean: f64,
    pub d_mm_mean: f64,
    pub r_mm_mean: f64,
    pub fixation_mean: f64,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// `None` when the timeline has no non-empty window.
pub fn summarize(timeline: &FixationTimeline) -> Option<UserSummary> {
    let defined: Vec<_> =
        timeline.points.iter().filter_map(|p| Some((p.values?, p.normalized?, p.fixation?))).collect();
    Some(UserSummary {
        user_id: timeline.user_id.clone(),
        n_windows: defined.len(),
        diversity_mean: mean(defined.iter().map(|(v, _, _)| v.diversity_norm))?,
        dominance_mean: mean(defined.iter().map(|(v, _, _)| v.dominance))?,
        recurrence_mean: mean(defined.iter().filter_map(|(v, _, _)| v.recurrence)),
        h_mm_mean: mean(defined.iter().map(|(_, n, _)| n.h))?,
        d_mm_mean: mean(defined.iter().map(|(_, n, _)| n.d))?,
        r_mm_mean: mean(defined.iter().map(|(_, n, _)| n.r))?,
        fixation_mean: mean(defined.iter().map(|(_, _, f)| *f))?,
    })
}

pub fn write_user_summaries<W: Write>(summaries: &[UserSummary], out: W) -> csv::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for s in summaries {
        writer.serialize(s)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_user_summaries<R: Read>(input: R) -> csv::Result<Vec<UserSummary>> {
    csv::Reader::from_reader(input).deserialize().collect()
}

/// Equal-width histogram over a fixed range; values outside fall in the end bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub panel: String,
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn uniform(panel: &str, lo: f64, hi: f64, bins: usize, values: impl IntoIterator<Item = f64>) -> Self {
        assert!(bins > 0 && hi > lo);
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|i| lo + i as f64 * width).collect();
        let mut counts = vec![0u64; bins];
        for v in values.into_iter().filter(|v| v.is_finite()) {
            let idx = (((v - lo) / width).floor().max(0.0) as usize).min(bins - 1);
            counts[idx] += 1;
        }
        Histogram { panel: panel.to_owned(), edges, counts }
    }

    /// The four per-user distributions: diversity, dominance, recurrence, combined score.
    pub fn panels(summaries: &[UserSummary], bins: usize) -> Vec<Histogram> {
        vec![
            Histogram::uniform("diversity", 0.0, 1.0, bins, summaries.iter().map(|s| s.diversity_mean)),
            Histogram::uniform("dominance", 0.0, 1.0, bins, summaries.iter().map(|s| s.dominance_mean)),
            Histogram::uniform("recurrence", -1.0, 1.0, bins, summaries.iter().filter_map(|s| s.recurrence_mean)),
            Histogram::uniform("combined", 0.0, 1.0, bins, summaries.iter().map(|s| s.fixation_mean)),
        ]
    }
}
