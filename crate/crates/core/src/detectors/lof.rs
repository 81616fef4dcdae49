use serde::{Deserialize, Serialize};

use super::{check_points, check_query, distance, Detector, DetectorError, Vote};

const LRD_EPS: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LofModel {
    pub k: usize,
    pub threshold: f64,
    pub train: Vec<Vec<f64>>,
    pub k_distance: Vec<f64>,
    pub lrd: Vec<f64>,
}

/// Neighbourhood of `dists` (indices with distances): everything within the
/// k-th smallest distance, ties included. Returns (k-distance, members).
fn neighbourhood(dists: &[(usize, f64)], k: usize) -> (f64, Vec<usize>) {
    let mut sorted: Vec<f64> = dists.iter().map(|&(_, d)| d).collect();
    sorted.select_nth_unstable_by(k - 1, f64::total_cmp);
    let kd = sorted[k - 1];
    let members = dists
        .iter()
        .filter(|&&(_, d)| d <= kd)
        .map(|&(i, _)| i)
        .collect();
    (kd, members)
}

fn lrd_of(dists: &[(usize, f64)], members: &[usize], k_distance: &[f64]) -> f64 {
    let sum: f64 = members
        .iter()
        .map(|&o| {
            let d = dists.iter().find(|&&(i, _)| i == o).map(|&(_, d)| d).unwrap();
            k_distance[o].max(d)
        })
        .sum();
    1.0 / (sum / members.len() as f64 + LRD_EPS)
}

pub fn fit_lof(train: &[Vec<f64>], k: usize, threshold: f64) -> Result<LofModel, DetectorError> {
    if k == 0 || k >= train.len() {
        return Err(DetectorError::InvalidParams(format!(
            "k must be in 1..{}, got {k}",
            train.len()
        )));
    }
    check_points(train)?;
    let all: Vec<Vec<(usize, f64)>> = train
        .iter()
        .enumerate()
        .map(|(i, p)| {
            train
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(j, q)| (j, distance(p, q)))
                .collect()
        })
        .collect();
    let hoods: Vec<(f64, Vec<usize>)> = all.iter().map(|d| neighbourhood(d, k)).collect();
    let k_distance: Vec<f64> = hoods.iter().map(|h| h.0).collect();
    let lrd = all
        .iter()
        .zip(&hoods)
        .map(|(d, (_, m))| lrd_of(d, m, &k_distance))
        .collect();
    Ok(LofModel {
        k,
        threshold,
        train: train.to_vec(),
        k_distance,
        lrd,
    })
}

impl LofModel {
    /// Local outlier factor of a query point against the training set.
    pub fn score(&self, x: &[f64]) -> f64 {
        let dists: Vec<(usize, f64)> = self
            .train
            .iter()
            .enumerate()
            .map(|(i, p)| (i, distance(p, x)))
            .collect();
        let (_, members) = neighbourhood(&dists, self.k);
        let own = lrd_of(&dists, &members, &self.k_distance);
        members.iter().map(|&o| self.lrd[o] / own).sum::<f64>() / members.len() as f64
    }
}

impl Detector for LofModel {
    fn tag(&self) -> &'static str {
        "LOF"
    }

    fn dim(&self) -> usize {
        self.train[0].len()
    }

    fn predict(&self, x: &[f64]) -> Result<Vote, DetectorError> {
        check_query(self.dim(), x)?;
        Ok(Vote::from_anomalous(self.score(x) > self.threshold))
    }
}
