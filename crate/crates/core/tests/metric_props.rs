use fixation::event_store::{EventLog, InteractionEvent, SECONDS_PER_DAY};
use fixation::metrics::{fixation_score, score_timeline, window_metrics, TimelineConfig, Weights};
use fixation::synth::{generate_user, UserSpec};
use proptest::prelude::*;

fn raw_events() -> impl Strategy<Value = (usize, Vec<(i64, Vec<u32>)>)> {
    (2usize..12).prop_flat_map(|k| {
        let event = (0i64..20 * SECONDS_PER_DAY, prop::collection::vec(0..k as u32, 1..4));
        (Just(k), prop::collection::vec(event, 1..60))
    })
}

fn build(events: &[(i64, Vec<u32>)], relabel: impl Fn(u32) -> u32, offset: i64) -> EventLog {
    EventLog::from_events(events.iter().enumerate().map(|(i, (ts, ids))| InteractionEvent {
        user_id: "u".into(),
        timestamp: ts + offset,
        content_id: i.to_string(),
        topics: ids.iter().map(|c| format!("t{c}")).collect(),
        cluster_ids: Some(ids.iter().map(|&c| relabel(c)).collect()),
    }))
}

proptest! {
    #[test]
    fn label_symmetry((k, events) in raw_events(), rotate in 0u32..12, t_end in 0i64..22 * SECONDS_PER_DAY) {
        let base = build(&events, |c| c, 0);
        let permuted = build(&events, |c| (k as u32 - 1 - c + rotate) % k as u32, 0);
        let a = window_metrics(&base, "u", t_end, 7, k).unwrap();
        let b = window_metrics(&permuted, "u", t_end, 7, k).unwrap();
        prop_assert_eq!(a.values, b.values);
    }

    #[test]
    fn time_shift_invariance((k, events) in raw_events(), offset in -1_000_000i64..1_000_000_000) {
        let base = build(&events, |c| c, 0);
        let shifted = build(&events, |c| c, offset.max(-events.iter().map(|e| e.0).min().unwrap()));
        let offset = shifted.span().unwrap().0 - base.span().unwrap().0;
        let config = TimelineConfig::new(k);
        let a = score_timeline(&base, "u", &config).unwrap();
        let b = score_timeline(&shifted, "u", &config).unwrap();
        prop_assert_eq!(a.points.len(), b.points.len());
        for (p, q) in a.points.iter().zip(&b.points) {
            prop_assert_eq!(p.t_end + offset, q.t_end);
            prop_assert_eq!(p.values, q.values);
            prop_assert_eq!(p.fixation, q.fixation);
        }
    }

    #[test]
    fn ranges_and_coinciding_extremes((k, events) in raw_events(), t_end in 0i64..22 * SECONDS_PER_DAY) {
        let log = build(&events, |c| c, 0);
        let m = window_metrics(&log, "u", t_end, 7, k).unwrap();
        if let Some(v) = m.values {
            prop_assert!((0.0..=1.0).contains(&v.diversity_norm));
            let active = m.active_clusters as f64;
            prop_assert!(v.dominance >= 1.0 / active - 1e-12 && v.dominance <= 1.0 + 1e-12);
            prop_assert_eq!(v.diversity_norm == 0.0, v.dominance == 1.0);
            prop_assert_eq!(m.active_clusters == 1, v.dominance == 1.0);
            if let Some(r) = v.recurrence {
                prop_assert!((-1.0..1.0).contains(&r));
            }
        }
    }

    #[test]
    fn composite_is_monotone(h in 0.0..1.0f64, d in 0.0..1.0f64, r in 0.0..1.0f64, e in 0.0..0.5f64) {
        let w = Weights::default();
        let f = fixation_score(h, d, r, &w);
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert!(fixation_score((h + e).min(1.0), d, r, &w) <= f);
        prop_assert!(fixation_score(h, (d + e).min(1.0), r, &w) >= f);
        prop_assert!(fixation_score(h, d, (r + e).min(1.0), &w) <= f);
    }
}

#[test]
fn dominance_rises_across_phase_change() {
    let spec = UserSpec {
        phase_schedule: Some(vec![(0, 0.1), (15, 0.9)]),
        burst_clumping: 0.3,
        ..UserSpec::fixated("u", 30, 12.0, 10, 0.1, 8)
    };
    let (events, gold) = generate_user(&spec).unwrap();
    assert!(gold);
    let log = EventLog::from_events(events);
    let timeline = score_timeline(&log, "u", &TimelineConfig::new(10)).unwrap();
    let start = spec.start_ts;
    let phase = |lo: i64, hi: i64| {
        let v: Vec<f64> = timeline
            .points
            .iter()
            .filter(|p| {
                p.t_end - 7 * SECONDS_PER_DAY >= start + lo * SECONDS_PER_DAY && p.t_end < start + hi * SECONDS_PER_DAY
            })
            .filter_map(|p| p.values.map(|v| v.dominance))
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let before = phase(0, 15);
    let after = phase(15, 30);
    assert!(after > before + 0.4, "dominance {before} -> {after}");
}
