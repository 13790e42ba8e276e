use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index;

use super::ClusterModel;
use crate::embedder::phrase_key;
use crate::rng;

/// Up to `per_cluster` phrases per cluster, drawn uniformly without replacement.
///
/// Membership comes from the model's phrase assignment; phrases the model does
/// not know are ignored and repeated phrases count once. Each cluster draws from
/// its own seeded stream, and the sample keeps the input order of `phrases`.
pub fn representative_samples<S: AsRef<str>>(
    model: &ClusterModel,
    phrases: &[S],
    per_cluster: usize,
    seed: u64,
) -> BTreeMap<u32, Vec<String>> {
    let mut seen = BTreeSet::new();
    let mut members: BTreeMap<u32, Vec<String>> = BTreeMap::new();
    for phrase in phrases {
        let key = phrase_key(phrase.as_ref());
        if let Some(&cluster) = model.assignment.get(&key) {
            if seen.insert(key.clone()) {
                members.entry(cluster).or_default().push(key);
            }
        }
    }
    members
        .into_iter()
        .map(|(cluster, pool)| {
            if pool.len() <= per_cluster {
                return (cluster, pool);
            }
            let mut rng = rng::stream(seed, u64::from(cluster) + 1);
            let mut picks = index::sample(&mut rng, pool.len(), per_cluster).into_vec();
            picks.sort_unstable();
            (cluster, picks.into_iter().map(|i| pool[i].clone()).collect())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(assignment: &[(&str, u32)]) -> ClusterModel {
        ClusterModel {
            k: 2,
            dim: 1,
            seed: 0,
            batch_size: 1,
            max_iters: 1,
            iterations: 0,
            inertia: 0.0,
            inertia_trace: vec![],
            centroids: vec![vec![0.0], vec![1.0]],
            assignment: assignment.iter().map(|(p, c)| (p.to_string(), *c)).collect(),
            labels: vec![],
        }
    }

    #[test]
    fn small_cluster_returns_everything() {
        let m = model(&[("a", 0), ("b", 0), ("c", 0), ("d", 1)]);
        let samples = representative_samples(&m, &["a", "b", "c", "d", "a", "zzz"], 100, 1);
        assert_eq!(samples[&0], vec!["a", "b", "c"]);
        assert_eq!(samples[&1], vec!["d"]);
    }

    #[test]
    fn deterministic_and_roughly_uniform() {
        let pool: Vec<String> = (0..10).map(|i| format!("p{i}")).collect();
        let pairs: Vec<(&str, u32)> = pool.iter().map(|p| (p.as_str(), 0)).collect();
        let m = model(&pairs);
        assert_eq!(representative_samples(&m, &pool, 1, 5), representative_samples(&m, &pool, 1, 5));

        let draws = 10_000;
        let mut counts = vec![0usize; 10];
        for seed in 0..draws {
            let pick = &representative_samples(&m, &pool, 1, seed)[&0][0];
            counts[pool.iter().position(|p| p == pick).unwrap()] += 1;
        }
        let expected = draws as f64 / 10.0;
        let sigma = (draws as f64 * 0.1 * 0.9).sqrt();
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        for &c in &counts {
            assert!((c as f64 - expected).abs() <= 3.0 * sigma, "{counts:?}");
        }
        // 9 degrees of freedom, 99.9th percentile.
        assert!(chi2 < 27.88, "chi2 = {chi2}");
    }
}
