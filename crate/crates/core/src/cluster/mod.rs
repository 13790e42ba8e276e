//! Second-level topic classes: MiniBatch K-means over phrase embeddings.
//!
//! [`fit_minibatch_kmeans`] seeds centroids with greedy k-means++ on a uniform
//! subset, then applies per-centre learning-rate updates from random minibatches.
//! Every epoch the inertia of the full dataset is measured; an epoch that makes
//! it worse is rolled back, so the checkpoint trace in
//! [`ClusterModel::inertia_trace`] never increases. A short Lloyd refinement
//! closes the fit.

mod kmeans;
mod samples;
mod sweep;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedder::phrase_key;

pub use kmeans::{fit_minibatch_kmeans, KMeansConfig};
pub use samples::representative_samples;
pub use sweep::{sweep_k, write_sweep_csv, KSweepRow};

#[derive(Debug, thiserror::Error)]
pub enum ClusterError {
    #[error("cannot fit K={k} clusters to {n} points")]
    InfeasibleK { k: usize, n: usize },
    #[error("row {row} has {found} components, expected {expected}")]
    DimMismatch { row: usize, expected: usize, found: usize },
    #[error("row {row} contains a non-finite value")]
    NonFinite { row: usize },
    #[error("input has no rows")]
    Empty,
    #[error("invalid clustering configuration: {0}")]
    InvalidConfig(String),
    #[error("{phrases} phrases supplied for {rows} vectors")]
    PhraseCountMismatch { phrases: usize, rows: usize },
}

/// Row-major dense matrix of `rows × dim` reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    dim: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, ClusterError> {
        let dim = rows.first().ok_or(ClusterError::Empty)?.as_ref().len();
        if dim == 0 {
            return Err(ClusterError::DimMismatch { row: 0, expected: 1, found: 0 });
        }
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (row, values) in rows.iter().enumerate() {
            let values = values.as_ref();
            if values.len() != dim {
                return Err(ClusterError::DimMismatch { row, expected: dim, found: values.len() });
            }
            data.extend_from_slice(values);
        }
        Ok(Self { dim, data })
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub(crate) fn check_finite(&self) -> Result<(), ClusterError> {
        match self.iter_rows().position(|r| r.iter().any(|v| !v.is_finite())) {
            Some(row) => Err(ClusterError::NonFinite { row }),
            None => Ok(()),
        }
    }
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid by squared Euclidean distance; ties go to the lowest id.
pub fn nearest(centroids: &[Vec<f64>], x: &[f64]) -> (u32, f64) {
    let mut best = (0u32, f64::INFINITY);
    for (id, c) in centroids.iter().enumerate() {
        let d = squared_distance(c, x);
        if d < best.1 {
            best = (id as u32, d);
        }
    }
    best
}

/// Labels and squared distances for every row, computed in parallel but
/// returned in row order.
pub(crate) fn assign_all(centroids: &[Vec<f64>], vectors: &Matrix) -> (Vec<u32>, Vec<f64>) {
    (0..vectors.rows()).into_par_iter().map(|i| nearest(centroids, vectors.row(i))).unzip()
}

/// A fitted clustering of first-level phrases into `k` second-level classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    #[serde(rename = "K")]
    pub k: usize,
    pub dim: usize,
    pub seed: u64,
    pub batch_size: usize,
    pub max_iters: usize,
    /// Minibatch iterations actually run.
    pub iterations: usize,
    /// Sum of squared distances from each fitted row to its centroid.
    pub inertia: f64,
    /// Full-data inertia at each checkpoint, then after refinement.
    pub inertia_trace: Vec<f64>,
    pub centroids: Vec<Vec<f64>>,
    /// Phrase → cluster id, keyed by canonical phrase. Empty when fitted on bare vectors.
    pub assignment: BTreeMap<String, u32>,
    /// Cluster of each fitted row, in row order.
    #[serde(skip)]
    pub labels: Vec<u32>,
}

impl ClusterModel {
    /// Fits on `vectors` and records which phrase each row belongs to.
    pub fn fit_phrases<S: AsRef<str>>(
        phrases: &[S],
        vectors: &Matrix,
        config: &KMeansConfig,
    ) -> Result<Self, ClusterError> {
        if phrases.len() != vectors.rows() {
            return Err(ClusterError::PhraseCountMismatch { phrases: phrases.len(), rows: vectors.rows() });
        }
        let mut model = fit_minibatch_kmeans(vectors, config)?;
        model.assignment = phrases.iter().zip(&model.labels).map(|(p, &id)| (phrase_key(p.as_ref()), id)).collect();
        Ok(model)
    }

    pub fn cluster_of(&self, phrase: &str) -> Option<u32> {
        self.assignment.get(&phrase_key(phrase)).copied()
    }

    /// Nearest-centroid ids for `vectors`.
    pub fn assign(&self, vectors: &Matrix) -> Result<Vec<u32>, ClusterError> {
        if vectors.dim() != self.dim {
            return Err(ClusterError::DimMismatch { row: 0, expected: self.dim, found: vectors.dim() });
        }
        Ok(assign_all(&self.centroids, vectors).0)
    }

    /// Renames cluster `c` to `permutation[c]`.
    pub fn relabeled(&self, permutation: &[u32]) -> ClusterModel {
        assert_eq!(permutation.len(), self.k);
        let mut centroids = vec![Vec::new(); self.k];
        for (old, c) in self.centroids.iter().enumerate() {
            centroids[permutation[old] as usize] = c.clone();
        }
        ClusterModel {
            centroids,
            labels: self.labels.iter().map(|&l| permutation[l as usize]).collect(),
            assignment: self.assignment.iter().map(|(p, &l)| (p.clone(), permutation[l as usize])).collect(),
            ..self.clone()
        }
    }
}

/// Free-function form of [`ClusterModel::assign`].
pub fn assign(model: &ClusterModel, vectors: &Matrix) -> Result<Vec<u32>, ClusterError> {
    model.assign(vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn model_with(centroids: Vec<Vec<f64>>) -> ClusterModel {
        ClusterModel {
            k: centroids.len(),
            dim: centroids[0].len(),
            seed: 0,
            batch_size: 1,
            max_iters: 1,
            iterations: 0,
            inertia: 0.0,
            inertia_trace: vec![],
            centroids,
            assignment: BTreeMap::new(),
            labels: vec![],
        }
    }

    #[test]
    fn matrix_rejects_ragged_rows() {
        assert!(matches!(
            Matrix::from_rows(&[vec![1.0, 2.0], vec![1.0]]),
            Err(ClusterError::DimMismatch { row: 1, expected: 2, found: 1 })
        ));
        assert!(matches!(Matrix::from_rows::<Vec<f64>>(&[]), Err(ClusterError::Empty)));
    }

    #[test]
    fn vector_on_centroid_gets_its_id() {
        let centroids: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, -(i as f64)]).collect();
        let model = model_with(centroids);
        let x = Matrix::from_rows(&[vec![3.0, -3.0]]).unwrap();
        assert_eq!(model.assign(&x).unwrap(), vec![3]);
    }

    #[test]
    fn equidistant_tie_goes_to_lowest_id() {
        let model = model_with(vec![vec![5.0, 5.0], vec![1.0, 0.0], vec![9.0, 9.0], vec![7.0, -7.0], vec![-1.0, 0.0]]);
        let x = Matrix::from_rows(&[vec![0.0, 0.0]]).unwrap();
        assert_eq!(model.assign(&x).unwrap(), vec![1]);
    }

    #[test]
    fn assignment_matches_exhaustive_scan() {
        let mut rng = crate::rng::stream(21, 0);
        let centroids: Vec<Vec<f64>> = (0..12).map(|_| (0..5).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let points: Vec<Vec<f64>> = (0..100).map(|_| (0..5).map(|_| rng.random_range(-4.0..4.0)).collect()).collect();
        let model = model_with(centroids.clone());
        let ids = model.assign(&Matrix::from_rows(&points).unwrap()).unwrap();
        for (p, id) in points.iter().zip(ids) {
            let dists: Vec<f64> =
                centroids.iter().map(|c| c.iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum()).collect();
            let min = dists.iter().cloned().fold(f64::INFINITY, f64::min);
            let expected = dists.iter().position(|&d| d == min).unwrap();
            assert_eq!(id as usize, expected);
        }
    }

    #[test]
    fn dim_mismatch_is_error() {
        let model = model_with(vec![vec![0.0, 0.0]]);
        let x = Matrix::from_rows(&[vec![0.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(model.assign(&x), Err(ClusterError::DimMismatch { .. })));
    }

    #[test]
    fn relabeling_is_consistent() {
        let mut model = model_with(vec![vec![0.0], vec![10.0], vec![20.0]]);
        model.labels = vec![0, 1, 2, 2];
        model.assignment.insert("a".into(), 2);
        let relabeled = model.relabeled(&[2, 0, 1]);
        assert_eq!(relabeled.centroids, vec![vec![10.0], vec![20.0], vec![0.0]]);
        assert_eq!(relabeled.labels, vec![2, 0, 1, 1]);
        assert_eq!(relabeled.cluster_of("a"), Some(1));
        let x = Matrix::from_rows(&[vec![19.0]]).unwrap();
        assert_eq!(relabeled.assign(&x).unwrap(), vec![1]);
    }
}
