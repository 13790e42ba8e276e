use std::collections::BTreeMap;

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{assign_all, nearest, squared_distance, ClusterError, ClusterModel, Matrix};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub batch_size: usize,
    pub max_iters: usize,
    /// Relative full-data inertia improvement below which fitting stops.
    pub tol: f64,
    /// Consecutive rolled-back checkpoints tolerated before stopping.
    pub max_no_improvement: usize,
    /// Lloyd passes applied after the minibatch phase.
    pub refine_passes: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self { k: 300, seed: 0, batch_size: 1024, max_iters: 100, tol: 1e-4, max_no_improvement: 3, refine_passes: 3 }
    }
}

impl KMeansConfig {
    pub fn with_k(k: usize, seed: u64) -> Self {
        Self { k, seed, ..Self::default() }
    }
}

pub fn fit_minibatch_kmeans(vectors: &Matrix, config: &KMeansConfig) -> Result<ClusterModel, ClusterError> {
    let n = vectors.rows();
    let k = config.k;
    if k == 0 || n < k {
        return Err(ClusterError::InfeasibleK { k, n });
    }
    if config.batch_size == 0 {
        return Err(ClusterError::InvalidConfig("batch_size must be positive".into()));
    }
    vectors.check_finite()?;

    let mut rng = rng::stream(config.seed, 0);
    let init_size = n.min((3 * k).max(config.batch_size));
    let subset = index::sample(&mut rng, n, init_size).into_vec();
    let mut centroids = kmeans_plus_plus(vectors, &subset, k, &mut rng);
    let mut counts = vec![0u64; k];

    let batch = config.batch_size.min(n);
    let checkpoint_every = n.div_ceil(batch);
    let (mut best, _) = checkpoint(vectors, &mut centroids, &mut counts);
    let mut snapshot = (centroids.clone(), counts.clone());
    let mut trace = vec![best];
    let mut no_improvement = 0;
    let mut iterations = 0;

    for iter in 1..=config.max_iters {
        iterations = iter;
        if best == 0.0 {
            break;
        }
        let sample = index::sample(&mut rng, n, batch).into_vec();
        let labels: Vec<u32> = sample.par_iter().map(|&i| nearest(&centroids, vectors.row(i)).0).collect();
        for (&i, &label) in sample.iter().zip(&labels) {
            let c = label as usize;
            counts[c] += 1;
            let eta = 1.0 / counts[c] as f64;
            for (cv, xv) in centroids[c].iter_mut().zip(vectors.row(i)) {
                *cv += eta * (xv - *cv);
            }
        }

        if iter % checkpoint_every != 0 && iter != config.max_iters {
            continue;
        }
        let (inertia, _) = checkpoint(vectors, &mut centroids, &mut counts);
        if inertia <= best {
            let improvement = (best - inertia) / best;
            best = inertia;
            snapshot = (centroids.clone(), counts.clone());
            trace.push(best);
            no_improvement = 0;
            if improvement < config.tol {
                break;
            }
        } else {
            centroids.clone_from(&snapshot.0);
            counts.clone_from(&snapshot.1);
            trace.push(best);
            no_improvement += 1;
            if no_improvement >= config.max_no_improvement {
                break;
            }
        }
    }

    let mut previous: Option<Vec<u32>> = None;
    for _ in 0..config.refine_passes {
        let (labels, _) = assign_all(&centroids, vectors);
        if previous.as_ref() == Some(&labels) {
            break;
        }
        recenter(&mut centroids, vectors, &labels);
        previous = Some(labels);
    }

    let (labels, d2) = assign_all(&centroids, vectors);
    let inertia: f64 = d2.iter().sum();
    if config.refine_passes > 0 {
        trace.push(inertia);
    }

    Ok(ClusterModel {
        k,
        dim: vectors.dim(),
        seed: config.seed,
        batch_size: config.batch_size,
        max_iters: config.max_iters,
        iterations,
        inertia,
        inertia_trace: trace,
        centroids,
        assignment: BTreeMap::new(),
        labels,
    })
}

/// Greedy k-means++ over `subset`: each new centre is the best of
/// `2 + ln k` D²-weighted candidates.
fn kmeans_plus_plus(vectors: &Matrix, subset: &[usize], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let m = subset.len();
    let trials = 2 + (k as f64).ln().floor() as usize;
    let point = |j: usize| vectors.row(subset[j]);

    let first = rng.random_range(0..m);
    let mut chosen = vec![false; m];
    chosen[first] = true;
    let mut centroids = vec![point(first).to_vec()];
    let mut closest: Vec<f64> = (0..m).map(|j| squared_distance(point(j), point(first))).collect();

    while centroids.len() < k {
        let potential: f64 = closest.iter().sum();
        let pick = if potential > 0.0 {
            let mut best: Option<(usize, f64, Vec<f64>)> = None;
            for _ in 0..trials {
                let candidate = weighted_pick(&closest, potential, rng.random::<f64>() * potential);
                let updated: Vec<f64> = closest
                    .iter()
                    .enumerate()
                    .map(|(j, &d)| d.min(squared_distance(point(j), point(candidate))))
                    .collect();
                let pot: f64 = updated.iter().sum();
                if best.as_ref().is_none_or(|b| pot < b.1) {
                    best = Some((candidate, pot, updated));
                }
            }
            let (candidate, _, updated) = best.expect("at least two trials");
            closest = updated;
            candidate
        } else {
            // Every remaining point coincides with a centre.
            let free: Vec<usize> = (0..m).filter(|&j| !chosen[j]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[pick] = true;
        centroids.push(point(pick).to_vec());
    }
    centroids
}

fn weighted_pick(weights: &[f64], total: f64, target: f64) -> usize {
    let mut acc = 0.0;
    for (j, &w) in weights.iter().enumerate() {
        acc += w;
        if acc > target {
            return j;
        }
    }
    debug_assert!(total > 0.0);
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Full-data assignment, reseeding any empty cluster onto the point farthest
/// from its centre. Returns the resulting inertia and labels.
fn checkpoint(vectors: &Matrix, centroids: &mut [Vec<f64>], counts: &mut [u64]) -> (f64, Vec<u32>) {
    let (mut labels, mut d2) = assign_all(centroids, vectors);
    let mut sizes = vec![0usize; centroids.len()];
    for &l in &labels {
        sizes[l as usize] += 1;
    }
    let empty: Vec<usize> = (0..centroids.len()).filter(|&c| sizes[c] == 0).collect();
    if !empty.is_empty() {
        let mut order: Vec<usize> = (0..d2.len()).collect();
        order.sort_by(|&a, &b| d2[b].total_cmp(&d2[a]).then(a.cmp(&b)));
        for (&c, &i) in empty.iter().zip(&order) {
            centroids[c] = vectors.row(i).to_vec();
            counts[c] = 1;
        }
        (labels, d2) = assign_all(centroids, vectors);
    }
    (d2.iter().sum(), labels)
}

fn recenter(centroids: &mut [Vec<f64>], vectors: &Matrix, labels: &[u32]) {
    let dim = vectors.dim();
    let mut sums = vec![vec![0.0; dim]; centroids.len()];
    let mut sizes = vec![0usize; centroids.len()];
    for (row, &l) in vectors.iter_rows().zip(labels) {
        sizes[l as usize] += 1;
        for (s, v) in sums[l as usize].iter_mut().zip(row) {
            *s += v;
        }
    }
    for ((c, s), &size) in centroids.iter_mut().zip(sums).zip(&sizes) {
        if size > 0 {
            *c = s.into_iter().map(|v| v / size as f64).collect();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn one_d(points: &[f64]) -> Matrix {
        Matrix::from_rows(&points.iter().map(|&p| vec![p]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn two_pairs_in_one_dimension() {
        let x = one_d(&[0.0, 0.1, 10.0, 10.1]);
        for seed in 0..20 {
            let model = fit_minibatch_kmeans(&x, &KMeansConfig::with_k(2, seed)).unwrap();
            let mut centres: Vec<f64> = model.centroids.iter().map(|c| c[0]).collect();
            centres.sort_by(f64::total_cmp);
            assert!((centres[0] - 0.05).abs() < 1e-12, "seed {seed}: {centres:?}");
            assert!((centres[1] - 10.05).abs() < 1e-12, "seed {seed}: {centres:?}");
            assert_eq!(model.labels[0], model.labels[1]);
            assert_eq!(model.labels[2], model.labels[3]);
            assert_ne!(model.labels[0], model.labels[2]);
            assert!((model.inertia - 4.0 * 0.05f64.powi(2)).abs() < 1e-12);
        }
    }

    #[test]
    fn k_equals_n_is_exact() {
        let x = Matrix::from_rows(&[vec![0.0, 1.0], vec![3.0, 1.0], vec![-2.0, 5.0], vec![7.0, 7.0], vec![0.5, 0.5]])
            .unwrap();
        let model = fit_minibatch_kmeans(&x, &KMeansConfig::with_k(5, 3)).unwrap();
        assert_eq!(model.inertia, 0.0);
        let mut labels = model.labels.clone();
        labels.sort();
        assert_eq!(labels, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn identical_points_still_fit() {
        let x = Matrix::from_rows(&vec![vec![1.5, -2.0]; 10]).unwrap();
        let model = fit_minibatch_kmeans(&x, &KMeansConfig::with_k(4, 1)).unwrap();
        assert_eq!(model.centroids.len(), 4);
        assert_eq!(model.inertia, 0.0);
    }

    #[test]
    fn infeasible_and_bad_input() {
        let x = one_d(&[0.0, 1.0]);
        assert!(matches!(
            fit_minibatch_kmeans(&x, &KMeansConfig::with_k(3, 0)),
            Err(ClusterError::InfeasibleK { k: 3, n: 2 })
        ));
        assert!(matches!(fit_minibatch_kmeans(&x, &KMeansConfig::with_k(0, 0)), Err(ClusterError::InfeasibleK { .. })));
        let bad = one_d(&[0.0, f64::NAN]);
        assert!(matches!(
            fit_minibatch_kmeans(&bad, &KMeansConfig::with_k(1, 0)),
            Err(ClusterError::NonFinite { row: 1 })
        ));
    }

    fn blobs(centres: &[Vec<f64>], per: usize, sigma: f64, seed: u64) -> (Matrix, Vec<usize>) {
        let mut rng = rng::stream(seed, 99);
        let noise = Normal::new(0.0, sigma).unwrap();
        let mut rows = Vec::new();
        let mut truth = Vec::new();
        for (b, c) in centres.iter().enumerate() {
            for _ in 0..per {
                rows.push(c.iter().map(|v| v + noise.sample(&mut rng)).collect::<Vec<_>>());
                truth.push(b);
            }
        }
        (Matrix::from_rows(&rows).unwrap(), truth)
    }

    #[test]
    fn inertia_trace_never_increases() {
        let centres: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64 * 3.0, (i % 2) as f64 * 3.0]).collect();
        let (x, _) = blobs(&centres, 300, 1.0, 4);
        for seed in 0..5 {
            let config = KMeansConfig { batch_size: 64, max_iters: 200, ..KMeansConfig::with_k(5, seed) };
            let model = fit_minibatch_kmeans(&x, &config).unwrap();
            assert!(model.inertia_trace.len() >= 2);
            for w in model.inertia_trace.windows(2) {
                assert!(w[1] <= w[0], "trace increased: {:?}", model.inertia_trace);
            }
        }
    }

    #[test]
    fn deterministic_for_seed_and_thread_count() {
        let centres: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64 * 10.0; 3]).collect();
        let (x, _) = blobs(&centres, 100, 1.0, 8);
        let config = KMeansConfig { batch_size: 50, ..KMeansConfig::with_k(4, 12) };
        let fit = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| fit_minibatch_kmeans(&x, &config).unwrap())
        };
        let a = fit(1);
        let b = fit(4);
        assert_eq!(a.centroids, b.centroids);
        assert_eq!(a.inertia.to_bits(), b.inertia.to_bits());
        assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn different_seeds_same_partition_on_separated_blobs() {
        let centres = vec![vec![0.0, 0.0], vec![20.0, 0.0], vec![0.0, 20.0]];
        let (x, _) = blobs(&centres, 50, 1.0, 2);
        let a = fit_minibatch_kmeans(&x, &KMeansConfig::with_k(3, 1)).unwrap();
        let b = fit_minibatch_kmeans(&x, &KMeansConfig::with_k(3, 2)).unwrap();
        // Same partition up to relabeling: the label map a -> b is a bijection.
        let mut map = BTreeMap::new();
        for (&la, &lb) in a.labels.iter().zip(&b.labels) {
            assert_eq!(*map.entry(la).or_insert(lb), lb);
        }
        assert_eq!(map.len(), 3);
    }
}
