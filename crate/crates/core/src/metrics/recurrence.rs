use std::collections::BTreeMap;

use super::window::item_clusters;
use super::MetricsError;
use crate::event_store::EventLog;

/// `(σ − μ) / (σ + μ)` over inter-event intervals, with the population standard
/// deviation. `None` for fewer than two intervals or when every interval is zero.
pub fn burstiness(intervals: &[f64]) -> Option<f64> {
    if intervals.len() < 2 {
        return None;
    }
    let n = intervals.len() as f64;
    let mean = intervals.iter().sum::<f64>() / n;
    let sigma = (intervals.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
    let denom = sigma + mean;
    (denom > 0.0).then(|| (sigma - mean) / denom)
}

/// Burstiness of re-engagement within the window, per cluster, combined as an
/// interval-count-weighted mean over clusters where it is defined.
pub fn user_recurrence(
    log: &EventLog,
    user: &str,
    t_end: i64,
    w_days: u32,
    k: usize,
) -> Result<Option<f64>, MetricsError> {
    let events = log.slice_window(user, t_end, w_days)?;
    let mut times: BTreeMap<u32, Vec<i64>> = BTreeMap::new();
    for event in events {
        for c in item_clusters(event, k)? {
            times.entry(c).or_default().push(event.timestamp);
        }
    }
    let mut terms: Vec<(f64, usize)> = times
        .values()
        .filter_map(|ts| {
            let intervals: Vec<f64> = ts.windows(2).map(|w| (w[1] - w[0]) as f64).collect();
            burstiness(&intervals).map(|b| (b, intervals.len()))
        })
        .collect();
    // Label-independent summation order.
    terms.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let weighted: f64 = terms.iter().map(|&(b, n)| b * n as f64).sum();
    let weight: usize = terms.iter().map(|t| t.1).sum();
    Ok((weight > 0).then(|| weighted / weight as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_store::InteractionEvent;

    fn log(events: &[(i64, u32)]) -> EventLog {
        EventLog::from_events(events.iter().map(|&(ts, c)| InteractionEvent {
            user_id: "u".into(),
            timestamp: ts,
            content_id: format!("c{ts}"),
            topics: vec![format!("t{c}")],
            cluster_ids: Some(vec![c]),
        }))
    }

    #[test]
    fn periodic_is_minus_one() {
        assert_eq!(burstiness(&[2.0, 2.0, 2.0]), Some(-1.0));
        assert_eq!(burstiness(&[86_400.0; 6]), Some(-1.0));
    }

    #[test]
    fn sigma_equal_to_mean_is_zero() {
        // mean 1, population sd 1
        assert_eq!(burstiness(&[0.0, 2.0]), Some(0.0));
    }

    #[test]
    fn worked_example() {
        // intervals [1, 1, 10]: μ = 4, σ = √18; value from a 30-digit evaluation.
        let b = burstiness(&[1.0, 1.0, 10.0]).unwrap();
        assert!((b - 0.029_437_251_522_859_414).abs() < 1e-12, "{b}");
    }

    #[test]
    fn too_few_intervals_is_undefined() {
        assert_eq!(burstiness(&[]), None);
        assert_eq!(burstiness(&[3.0]), None);
        assert_eq!(burstiness(&[0.0, 0.0]), None);
    }

    #[test]
    fn single_cluster_passthrough() {
        let l = log(&[(0, 3), (2, 3), (4, 3), (6, 3)]);
        assert_eq!(user_recurrence(&l, "u", 6, 1, 5).unwrap(), Some(-1.0));
    }

    #[test]
    fn equal_interval_counts_average() {
        let l = log(&[(0, 0), (2, 0), (4, 0), (1, 1), (2, 1), (12, 1)]);
        let b0 = burstiness(&[2.0, 2.0]).unwrap();
        let b1 = burstiness(&[1.0, 10.0]).unwrap();
        let r = user_recurrence(&l, "u", 12, 1, 2).unwrap().unwrap();
        assert!((r - (b0 + b1) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn clusters_without_three_items_do_not_qualify() {
        let l = log(&[(0, 0), (5, 0), (1, 1), (9, 1)]);
        assert_eq!(user_recurrence(&l, "u", 10, 1, 2).unwrap(), None);
    }

    #[test]
    fn multi_tag_item_counts_once_per_cluster() {
        let mut events: Vec<_> = log(&[(0, 0), (10, 0), (20, 0)]).events().cloned().collect();
        events[1].topics = vec!["a".into(), "b".into()];
        events[1].cluster_ids = Some(vec![0, 0]);
        let l = EventLog::from_events(events);
        assert_eq!(user_recurrence(&l, "u", 20, 1, 1).unwrap(), Some(-1.0));
    }
}
