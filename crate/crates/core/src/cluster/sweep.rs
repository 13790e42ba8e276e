use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{fit_minibatch_kmeans, squared_distance, ClusterError, KMeansConfig, Matrix};

/// Cluster-quality statistics for one K, all with Euclidean distance.
///
/// `intra` is the mean distance from each point to its assigned centroid;
/// `inter` the mean distance over distinct centroid pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSweepRow {
    #[serde(rename = "K")]
    pub k: usize,
    pub intra: f64,
    pub inter: f64,
    /// `inter / intra`, absent when `intra == 0`.
    pub ratio: Option<f64>,
}

/// Fits a fresh model for each K (sharing `base`'s seed and settings).
pub fn sweep_k(vectors: &Matrix, ks: &[usize], base: &KMeansConfig) -> Result<Vec<KSweepRow>, ClusterError> {
    if let Some(&k) = ks.iter().find(|&&k| k == 0 || k > vectors.rows()) {
        return Err(ClusterError::InfeasibleK { k, n: vectors.rows() });
    }
    ks.iter()
        .map(|&k| {
            let model = fit_minibatch_kmeans(vectors, &KMeansConfig { k, ..base.clone() })?;
            let intra = vectors
                .iter_rows()
                .zip(&model.labels)
                .map(|(row, &l)| squared_distance(row, &model.centroids[l as usize]).sqrt())
                .sum::<f64>()
                / vectors.rows() as f64;
            let mut pair_sum = 0.0;
            let mut pairs = 0usize;
            for i in 0..k {
                for j in i + 1..k {
                    pair_sum += squared_distance(&model.centroids[i], &model.centroids[j]).sqrt();
                    pairs += 1;
                }
            }
            let inter = if pairs > 0 { pair_sum / pairs as f64 } else { 0.0 };
            let ratio = (intra > 0.0).then(|| inter / intra);
            Ok(KSweepRow { k, intra, inter, ratio })
        })
        .collect()
}

/// `K,intra,inter,ratio` with an empty ratio when undefined.
pub fn write_sweep_csv<W: Write>(rows: &[KSweepRow], out: W) -> csv::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["K", "intra", "inter", "ratio"])?;
    for row in rows {
        writer.write_record([
            row.k.to_string(),
            row.intra.to_string(),
            row.inter.to_string(),
            row.ratio.map(|r| r.to_string()).unwrap_or_default(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}
