use serde::{Deserialize, Serialize};

use super::{check_points, check_query, distance, percentile, Detector, DetectorError, Vote};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbscanModel {
    pub eps: f64,
    pub min_pts: usize,
    pub core_points: Vec<Vec<f64>>,
    pub dim: usize,
}

/// Keeps the training points with at least `min_pts` points (itself
/// included) within `eps`, inclusive.
pub fn fit_dbscan(train: &[Vec<f64>], eps: f64, min_pts: usize) -> Result<DbscanModel, DetectorError> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(DetectorError::InvalidParams(format!("eps must be positive, got {eps}")));
    }
    if min_pts == 0 {
        return Err(DetectorError::InvalidParams("min_pts must be at least 1".into()));
    }
    let dim = check_points(train)?;
    let core_points = train
        .iter()
        .filter(|p| train.iter().filter(|q| distance(p, q) <= eps).count() >= min_pts)
        .cloned()
        .collect();
    Ok(DbscanModel {
        eps,
        min_pts,
        core_points,
        dim,
    })
}

/// The `pct` percentile of each point's distance to its `k`-th nearest other point.
pub fn default_eps(train: &[Vec<f64>], k: usize, pct: f64) -> Result<f64, DetectorError> {
    if train.len() <= k {
        return Err(DetectorError::TooFewPoints {
            needed: k + 1,
            got: train.len(),
        });
    }
    let kth: Vec<f64> = train
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut d: Vec<f64> = train
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, q)| distance(p, q))
                .collect();
            d.select_nth_unstable_by(k - 1, f64::total_cmp);
            d[k - 1]
        })
        .collect();
    let eps = percentile(&kth, pct);
    // all-duplicate training data still needs a positive radius
    Ok(if eps > 0.0 { eps } else { f64::MIN_POSITIVE })
}

impl Detector for DbscanModel {
    fn tag(&self) -> &'static str {
        "DB"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn predict(&self, x: &[f64]) -> Result<Vote, DetectorError> {
        check_query(self.dim, x)?;
        let near = self.core_points.iter().any(|c| distance(c, x) <= self.eps);
        Ok(Vote::from_anomalous(!near))
    }
}
