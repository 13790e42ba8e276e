//! Synthetic browsing traces with known fixation structure.
//!
//! Each day a user views about `events_per_day` items. An item belongs to the
//! dominant cluster with probability `dominant_share` and to one of the other
//! clusters uniformly otherwise. Gaps between items within a day mix a
//! constant with a Lomax draw (shifted Pareto, shape 1.5, mean 1) in proportion
//! `burst_clumping`, then are rescaled to fill the day: clumping 0 gives a
//! perfectly regular schedule, clumping 1 a heavy-tailed one.

use std::collections::BTreeSet;
use std::hash::Hasher;

use rand::Rng;
use rand_distr::{Distribution, Normal, Pareto};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{CalibrationError, GoldLabelSet};
use crate::embedder::EmbeddingTable;
use crate::event_store::{EventLog, InteractionEvent, SECONDS_PER_DAY};
use crate::rng;

pub const PARETO_SHAPE: f64 = 1.5;
/// Lomax scale giving a mean gap of 1.
pub const PARETO_SCALE: f64 = PARETO_SHAPE - 1.0;
pub const INTERVAL_FAMILY: &str = "lomax(shape=1.5, mean=1) mixed with constant 1 by burst_clumping";
pub const PHRASES_PER_CLUSTER: usize = 8;
pub const FIXATED_SHARE: f64 = 0.7;
pub const FIXATED_DAYS: u32 = 7;
pub const DEFAULT_START_TS: i64 = 1_704_067_200;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("user {user_id}: {message}")]
    InvalidSpec { user_id: String, message: String },
    #[error("duplicate user id {0}")]
    DuplicateUser(String),
    #[error("annotator reliability must lie in [0, 1], got {0}")]
    InvalidReliability(f64),
    #[error(transparent)]
    Labels(#[from] CalibrationError),
}

fn default_start() -> i64 {
    DEFAULT_START_TS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSpec {
    pub user_id: String,
    pub days: u32,
    pub events_per_day: f64,
    #[serde(alias = "K_true")]
    pub k_true: u32,
    pub dominant_share: f64,
    #[serde(default)]
    pub dominant_cluster: u32,
    #[serde(default)]
    pub burst_clumping: f64,
    /// `(start_day, dominant_share)` changes; the latest entry at or before a
    /// day applies, `dominant_share` before the first.
    #[serde(default)]
    pub phase_schedule: Option<Vec<(u32, f64)>>,
    pub seed: u64,
    #[serde(default = "default_start")]
    pub start_ts: i64,
}

impl UserSpec {
    /// Uniform over `k_true` clusters.
    pub fn exploratory(user_id: impl Into<String>, days: u32, events_per_day: f64, k_true: u32, seed: u64) -> Self {
        Self {
            user_id: user_id.into(),
            days,
            events_per_day,
            k_true,
            dominant_share: 1.0 / k_true as f64,
            dominant_cluster: 0,
            burst_clumping: 0.5,
            phase_schedule: None,
            seed,
            start_ts: DEFAULT_START_TS,
        }
    }

    pub fn fixated(
        user_id: impl Into<String>,
        days: u32,
        events_per_day: f64,
        k_true: u32,
        dominant_share: f64,
        seed: u64,
    ) -> Self {
        Self {
            dominant_share,
            dominant_cluster: (seed % k_true as u64) as u32,
            ..Self::exploratory(user_id, days, events_per_day, k_true, seed)
        }
    }

    pub fn share_on(&self, day: u32) -> f64 {
        self.phase_schedule
            .iter()
            .flatten()
            .filter(|(start, _)| *start <= day)
            .max_by_key(|(start, _)| *start)
            .map_or(self.dominant_share, |&(_, s)| s)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |message: String| Err(SynthError::InvalidSpec { user_id: self.user_id.clone(), message });
        if self.days == 0 {
            return fail("days must be at least 1".into());
        }
        if self.k_true == 0 || self.dominant_cluster >= self.k_true {
            return fail(format!("dominant cluster {} outside 0..{}", self.dominant_cluster, self.k_true));
        }
        if !self.events_per_day.is_finite() || self.events_per_day < 0.0 {
            return fail(format!("events_per_day {} is not a non-negative rate", self.events_per_day));
        }
        if !(0.0..=1.0).contains(&self.burst_clumping) {
            return fail(format!("burst_clumping {} outside [0, 1]", self.burst_clumping));
        }
        let shares = std::iter::once(self.dominant_share).chain(self.phase_schedule.iter().flatten().map(|p| p.1));
        for share in shares {
            if !(0.0..=1.0).contains(&share) {
                return fail(format!("dominant share {share} outside [0, 1]"));
            }
            if self.k_true == 1 && share < 1.0 {
                return fail("a single cluster needs dominant share 1".into());
            }
        }
        Ok(())
    }

    /// Fixated iff the share is ≥ 0.7 on at least 7 consecutive days.
    pub fn gold_label(&self) -> bool {
        let mut run = 0;
        for day in 0..self.days {
            run = if self.share_on(day) >= FIXATED_SHARE { run + 1 } else { 0 };
            if run >= FIXATED_DAYS {
                return true;
            }
        }
        false
    }
}

pub fn phrase_name(cluster: u32, variant: usize) -> String {
    format!("cluster {cluster} phrase {variant}")
}

/// Within-day offsets (seconds) for `n` events.
fn day_offsets(n: usize, clumping: f64, rng: &mut impl Rng) -> Vec<i64> {
    let pareto = Pareto::new(PARETO_SCALE, PARETO_SHAPE).expect("valid Pareto parameters");
    let gaps: Vec<f64> = (0..n)
        .map(|_| {
            let heavy = if clumping > 0.0 { pareto.sample(rng) - PARETO_SCALE } else { 1.0 };
            (1.0 - clumping) + clumping * heavy
        })
        .collect();
    let total: f64 = gaps.iter().sum();
    let mut before = 0.0;
    gaps.iter()
        .map(|g| {
            let at = (before + g / 2.0) / total;
            before += g;
            ((at * SECONDS_PER_DAY as f64).round() as i64).min(SECONDS_PER_DAY - 1)
        })
        .collect()
}

/// Events of one user, in time order, with ground-truth cluster ids attached.
pub fn generate_user(spec: &UserSpec) -> Result<(Vec<InteractionEvent>, bool), SynthError> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, 0);
    let whole = spec.events_per_day.floor();
    let frac = spec.events_per_day - whole;
    let mut events = Vec::new();
    for day in 0..spec.days {
        let n = whole as usize + rng.random_bool(frac) as usize;
        let share = spec.share_on(day);
        let day_start = spec.start_ts + day as i64 * SECONDS_PER_DAY;
        for (i, offset) in day_offsets(n, spec.burst_clumping, &mut rng).into_iter().enumerate() {
            let cluster = if spec.k_true == 1 || rng.random_bool(share) {
                spec.dominant_cluster
            } else {
                let other = rng.random_range(0..spec.k_true - 1);
                if other >= spec.dominant_cluster {
                    other + 1
                } else {
                    other
                }
            };
            let tags = 1 + rng.random_bool(0.5) as usize;
            let first = rng.random_range(0..PHRASES_PER_CLUSTER);
            let mut variants = vec![first];
            if tags == 2 {
                variants.push((first + rng.random_range(1..PHRASES_PER_CLUSTER)) % PHRASES_PER_CLUSTER);
            }
            events.push(InteractionEvent {
                user_id: spec.user_id.clone(),
                timestamp: day_start + offset,
                content_id: format!("{}-d{day}-{i}", spec.user_id),
                topics: variants.iter().map(|&v| phrase_name(cluster, v)).collect(),
                cluster_ids: Some(vec![cluster; variants.len()]),
            });
        }
    }
    Ok((events, spec.gold_label()))
}

fn user_stream(user_id: &str) -> u64 {
    let mut h = fnv::FnvHasher::default();
    h.write(user_id.as_bytes());
    h.finish()
}

/// Three simulated annotators, each matching the true label with probability
/// `reliability`, on a stream keyed by the user id.
pub fn simulate_votes(user_id: &str, truth: bool, reliability: f64, seed: u64) -> Vec<bool> {
    let mut rng = rng::stream(seed, user_stream(user_id));
    (0..3).map(|_| if rng.random_bool(reliability) { truth } else { !truth }).collect()
}

pub fn generate_cohort(
    specs: &[UserSpec],
    reliability: f64,
    seed: u64,
) -> Result<(EventLog, GoldLabelSet), SynthError> {
    if !(0.0..=1.0).contains(&reliability) {
        return Err(SynthError::InvalidReliability(reliability));
    }
    let mut ids = BTreeSet::new();
    for spec in specs {
        if !ids.insert(spec.user_id.as_str()) {
            return Err(SynthError::DuplicateUser(spec.user_id.clone()));
        }
    }
    let users: Vec<(Vec<InteractionEvent>, bool)> = specs.par_iter().map(generate_user).collect::<Result<_, _>>()?;
    let votes: Vec<(String, Vec<bool>)> = specs
        .iter()
        .zip(&users)
        .map(|(s, (_, truth))| (s.user_id.clone(), simulate_votes(&s.user_id, *truth, reliability, seed)))
        .collect();
    let log = EventLog::from_events(users.into_iter().flat_map(|(events, _)| events));
    Ok((log, GoldLabelSet::from_votes(votes)?))
}

/// Embeddings for every synthetic phrase of clusters `0..k`: a random centre
/// per cluster on the unit sphere plus isotropic noise with expected norm
/// about `noise`.
pub fn synthetic_embeddings(k: u32, dim: usize, noise: f64, seed: u64) -> EmbeddingTable {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rng = rng::stream(seed, u64::MAX);
    let mut table = EmbeddingTable::new(dim);
    for cluster in 0..k {
        let mut centre: Vec<f64> = (0..dim).map(|_| normal.sample(&mut rng)).collect();
        let norm = centre.iter().map(|v| v * v).sum::<f64>().sqrt();
        centre.iter_mut().for_each(|v| *v /= norm);
        for variant in 0..PHRASES_PER_CLUSTER {
            let scale = noise / (dim as f64).sqrt();
            let v = centre.iter().map(|c| c + scale * normal.sample(&mut rng)).collect();
            table.insert(&phrase_name(cluster, variant), v);
        }
    }
    table
}

/// `fixated` users at `share` followed by `exploratory` uniform users, 30 days
/// at `events_per_day`, with seeds `seed + index`.
pub fn archetype_cohort(
    fixated: usize,
    exploratory: usize,
    k_true: u32,
    share: f64,
    events_per_day: f64,
    seed: u64,
) -> Vec<UserSpec> {
    (0..fixated + exploratory)
        .map(|i| {
            let s = seed.wrapping_add(i as u64);
            if i < fixated {
                UserSpec::fixated(format!("fix{i:03}"), 30, events_per_day, k_true, share, s)
            } else {
                UserSpec::exploratory(format!("exp{i:03}"), 30, events_per_day, k_true, s)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::burstiness;

    #[test]
    fn single_cluster_user() {
        let spec = UserSpec::fixated("u", 30, 10.0, 6, 1.0, 3);
        let (events, gold) = generate_user(&spec).unwrap();
        assert!(gold);
        assert_eq!(events.len(), 300);
        let c = spec.dominant_cluster;
        assert!(events.iter().all(|e| e.cluster_ids.as_ref().unwrap().iter().all(|&x| x == c)));
        assert!(events.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
    }

    #[test]
    fn uniform_user_is_not_fixated() {
        assert!(!UserSpec::exploratory("u", 30, 5.0, 8, 1).gold_label());
    }

    #[test]
    fn gold_needs_seven_consecutive_days() {
        let mut spec = UserSpec::exploratory("u", 30, 5.0, 8, 1);
        spec.phase_schedule = Some(vec![(10, 0.8), (16, 0.1)]);
        assert!(!spec.gold_label());
        spec.phase_schedule = Some(vec![(10, 0.8), (17, 0.1)]);
        assert!(spec.gold_label());
        assert_eq!(spec.share_on(9), 0.125);
        assert_eq!(spec.share_on(16), 0.8);
    }

    #[test]
    fn dominant_share_within_binomial_bounds() {
        for (share, seed) in [(0.9, 1), (0.5, 2), (0.25, 3)] {
            let spec = UserSpec::fixated("u", 60, 40.0, 10, share, seed);
            let (events, _) = generate_user(&spec).unwrap();
            let n = events.len() as f64;
            let hits =
                events.iter().filter(|e| e.cluster_ids.as_ref().unwrap()[0] == spec.dominant_cluster).count() as f64;
            let sigma = (n * share * (1.0 - share)).sqrt();
            assert!((hits - n * share).abs() <= 3.0 * sigma, "share {share}: {hits} of {n}");
        }
    }

    #[test]
    fn clumping_controls_burstiness() {
        let intervals = |clumping: f64, seed: u64| {
            let mut spec = UserSpec::fixated("u", 20, 24.0, 1, 1.0, seed);
            spec.burst_clumping = clumping;
            let (events, _) = generate_user(&spec).unwrap();
            let gaps: Vec<f64> = events.windows(2).map(|w| (w[1].timestamp - w[0].timestamp) as f64).collect();
            burstiness(&gaps).unwrap()
        };
        assert_eq!(intervals(0.0, 1), -1.0);
        let mean: f64 = (0..20).map(|s| intervals(1.0, s)).sum::<f64>() / 20.0;
        assert!(mean > 0.0, "mean burstiness {mean}");
    }

    #[test]
    fn cohort_is_deterministic_and_checks_ids() {
        let specs = archetype_cohort(3, 3, 5, 0.9, 4.0, 10);
        let a = generate_cohort(&specs, 0.9, 1).unwrap();
        let b = generate_cohort(&specs, 0.9, 1).unwrap();
        let bytes = |log: &EventLog| {
            let mut v = Vec::new();
            log.write_jsonl(&mut v).unwrap();
            v
        };
        assert_eq!(bytes(&a.0), bytes(&b.0));
        assert_eq!(a.1, b.1);
        let mut dup = specs.clone();
        dup.push(specs[0].clone());
        assert!(matches!(generate_cohort(&dup, 1.0, 0), Err(SynthError::DuplicateUser(_))));
    }

    #[test]
    fn perfect_annotators_agree() {
        let specs = vec![UserSpec::fixated("a", 10, 3.0, 4, 1.0, 0), UserSpec::exploratory("b", 10, 3.0, 4, 1)];
        let (_, gold) = generate_cohort(&specs, 1.0, 5).unwrap();
        assert_eq!(gold.kappa(), Some(1.0));
        assert_eq!(gold.label("a"), Some(true));
        assert_eq!(gold.label("b"), Some(false));
    }

    #[test]
    fn coin_flip_annotators_are_at_chance() {
        let specs: Vec<UserSpec> = (0..4000).map(|i| UserSpec::exploratory(format!("u{i}"), 1, 0.0, 2, i)).collect();
        let (_, gold) = generate_cohort(&specs, 0.5, 9).unwrap();
        assert!(gold.kappa().unwrap().abs() < 0.05);
    }

    #[test]
    fn invalid_specs() {
        let mut spec = UserSpec::exploratory("u", 0, 1.0, 3, 0);
        assert!(generate_user(&spec).is_err());
        spec.days = 3;
        spec.dominant_cluster = 3;
        assert!(generate_user(&spec).is_err());
    }

    #[test]
    fn embeddings_cover_every_phrase() {
        let table = synthetic_embeddings(4, 16, 0.05, 2);
        assert_eq!(table.len(), 4 * PHRASES_PER_CLUSTER);
        assert!(table.lookup(&phrase_name(3, 7)).is_some());
    }
}
