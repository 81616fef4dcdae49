use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_points, check_query, distance, percentile, Detector, DetectorError, Vote};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansModel {
    pub centroids: Vec<Vec<f64>>,
    pub distance_threshold: f64,
    pub iterations: usize,
    /// Sum of squared distances to the assigned centroid after each iteration.
    pub sse_history: Vec<f64>,
}

impl KMeansModel {
    pub fn nearest(&self, x: &[f64]) -> (usize, f64) {
        nearest(&self.centroids, x)
    }
}

fn nearest(centroids: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = distance(c, x);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// k-means++ seeding followed by Lloyd iterations until the assignment stops
/// changing or `max_iter` is hit. The threshold is the `pct` percentile of
/// training nearest-centroid distances.
pub fn fit_kmeans(
    train: &[Vec<f64>],
    k: usize,
    seed: u64,
    max_iter: usize,
    pct: f64,
) -> Result<KMeansModel, DetectorError> {
    if k == 0 || train.len() < k {
        return Err(DetectorError::TooFewPoints {
            needed: k.max(1),
            got: train.len(),
        });
    }
    let dim = check_points(train)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut centroids: Vec<Vec<f64>> = vec![train[rng.random_range(0..train.len())].clone()];
    let mut d2: Vec<f64> = train
        .iter()
        .map(|p| distance(p, &centroids[0]).powi(2))
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut idx = train.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && target < w {
                    idx = i;
                    break;
                }
                target -= w;
            }
            // guard against rounding landing on an already chosen point
            if d2[idx] == 0.0 {
                idx = d2
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(i, _)| i)
                    .unwrap_or(0);
            }
            idx
        } else {
            rng.random_range(0..train.len())
        };
        let c = train[pick].clone();
        for (w, p) in d2.iter_mut().zip(train) {
            *w = w.min(distance(p, &c).powi(2));
        }
        centroids.push(c);
    }

    let mut assign: Vec<usize> = train.iter().map(|p| nearest(&centroids, p).0).collect();
    let mut sse_history = Vec::new();
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in train.iter().zip(&assign) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            // an emptied cluster keeps its previous centroid
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        let next: Vec<usize> = train.iter().map(|p| nearest(&centroids, p).0).collect();
        sse_history.push(
            train
                .iter()
                .zip(&next)
                .map(|(p, &a)| distance(p, &centroids[a]).powi(2))
                .sum(),
        );
        if next == assign {
            break;
        }
        assign = next;
    }

    let dists: Vec<f64> = train.iter().map(|p| nearest(&centroids, p).1).collect();
    Ok(KMeansModel {
        centroids,
        distance_threshold: percentile(&dists, pct),
        iterations,
        sse_history,
    })
}

impl Detector for KMeansModel {
    fn tag(&self) -> &'static str {
        "KM"
    }

    fn dim(&self) -> usize {
        self.centroids[0].len()
    }

    fn predict(&self, x: &[f64]) -> Result<Vote, DetectorError> {
        check_query(self.dim(), x)?;
        Ok(Vote::from_anomalous(self.nearest(x).1 > self.distance_threshold))
    }
}
