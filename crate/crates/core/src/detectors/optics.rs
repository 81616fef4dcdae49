use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use super::{check_points, check_query, distance, percentile, Detector, DetectorError, Vote};

/// Result of one OPTICS pass. `reach[i]` is `None` where undefined (the first
/// point of each component).
#[derive(Debug, Clone, PartialEq)]
pub struct OpticsOrder {
    pub order: Vec<usize>,
    pub reach: Vec<Option<f64>>,
    pub core: Vec<Option<f64>>,
}

/// Runs the ordering with an unbounded radius. Ties in the seed queue go to
/// the lower index.
fn order_with(core: &[Option<f64>], dist: impl Fn(usize, usize) -> f64) -> OpticsOrder {
    let n = core.len();
    // infinity stands for "undefined"; real distances are finite
    let mut reach = vec![f64::INFINITY; n];
    let mut pending: Vec<usize> = (0..n).rev().collect();
    let mut order = Vec::with_capacity(n);

    while let Some(start) = pending.pop() {
        order.push(start);
        let mut p = start;
        loop {
            // relax every pending point through `p`, picking the next seed in
            // the same sweep
            let cd = core[p];
            let mut best: Option<(f64, usize, usize)> = None;
            for (slot, &o) in pending.iter().enumerate() {
                if let Some(cd) = cd {
                    let r = cd.max(dist(p, o));
                    if r < reach[o] {
                        reach[o] = r;
                    }
                }
                let r = reach[o];
                if r.is_finite()
                    && best.is_none_or(|(br, bo, _)| r < br || (r == br && o < bo))
                {
                    best = Some((r, o, slot));
                }
            }
            let Some((_, q, slot)) = best else { break };
            // keep `pending` sorted descending so `pop` yields the lowest index
            pending.remove(slot);
            order.push(q);
            p = q;
        }
    }
    OpticsOrder {
        order,
        reach: reach
            .into_iter()
            .map(|r| r.is_finite().then_some(r))
            .collect(),
        core: core.to_vec(),
    }
}

/// The `min_pts` smallest distances from each point, itself (0) included.
fn nearest_distances(points: &[Vec<f64>], min_pts: usize) -> Vec<Vec<f64>> {
    points
        .iter()
        .map(|p| {
            let mut d: Vec<f64> = points.iter().map(|q| distance(p, q)).collect();
            d.sort_by(f64::total_cmp);
            d.truncate(min_pts);
            d
        })
        .collect()
}

fn core_of(nearest: &[f64], min_pts: usize) -> Option<f64> {
    nearest.get(min_pts - 1).copied()
}

/// Full OPTICS ordering of `points`.
pub fn optics_order(points: &[Vec<f64>], min_pts: usize) -> OpticsOrder {
    let core: Vec<Option<f64>> = nearest_distances(points, min_pts)
        .iter()
        .map(|d| core_of(d, min_pts))
        .collect();
    order_with(&core, |a, b| distance(&points[a], &points[b]))
}

/// Lazily built training distance matrix; not part of the model's identity.
#[derive(Debug, Clone, Default)]
struct DistanceCache(OnceLock<Arc<Vec<f64>>>);

impl PartialEq for DistanceCache {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpticsModel {
    pub min_pts: usize,
    pub reach_threshold: f64,
    pub train: Vec<Vec<f64>>,
    /// Per training point, its `min_pts` smallest distances (self included).
    pub nearest: Vec<Vec<f64>>,
    #[serde(skip)]
    cache: DistanceCache,
}

pub fn fit_optics(train: &[Vec<f64>], min_pts: usize, pct: f64) -> Result<OpticsModel, DetectorError> {
    if min_pts < 2 || min_pts >= train.len() {
        return Err(DetectorError::InvalidParams(format!(
            "min_pts must be in 2..{}, got {min_pts}",
            train.len()
        )));
    }
    check_points(train)?;
    let ord = optics_order(train, min_pts);
    let reach: Vec<f64> = ord.reach.iter().flatten().copied().collect();
    Ok(OpticsModel {
        min_pts,
        reach_threshold: percentile(&reach, pct),
        train: train.to_vec(),
        nearest: nearest_distances(train, min_pts),
        cache: DistanceCache::default(),
    })
}

impl OpticsModel {
    fn train_distances(&self) -> &[f64] {
        self.cache.0.get_or_init(|| {
            let n = self.train.len();
            let mut m = vec![0.0; n * n];
            for a in 0..n {
                for b in a + 1..n {
                    let d = distance(&self.train[a], &self.train[b]);
                    m[a * n + b] = d;
                    m[b * n + a] = d;
                }
            }
            Arc::new(m)
        })
    }

    /// Reachability of `x` when it is appended to the training set and the
    /// ordering is recomputed.
    pub fn reachability(&self, x: &[f64]) -> Option<f64> {
        let n = self.train.len();
        let m = self.min_pts;
        let dx: Vec<f64> = self.train.iter().map(|p| distance(p, x)).collect();
        let mut core: Vec<Option<f64>> = self
            .nearest
            .iter()
            .zip(&dx)
            .map(|(near, &d)| {
                let c = near[m - 1];
                Some(if d < c { d.max(near[m - 2]) } else { c })
            })
            .collect();
        let mut own = dx.clone();
        own.push(0.0);
        own.sort_by(f64::total_cmp);
        core.push(own.get(m - 1).copied());
        let tm = self.train_distances();
        let ord = order_with(&core, |a, b| {
            if a == n {
                dx[b]
            } else if b == n {
                dx[a]
            } else {
                tm[a * n + b]
            }
        });
        ord.reach[n]
    }
}

impl Detector for OpticsModel {
    fn tag(&self) -> &'static str {
        "OP"
    }

    fn dim(&self) -> usize {
        self.train[0].len()
    }

    fn predict(&self, x: &[f64]) -> Result<Vote, DetectorError> {
        check_query(self.dim(), x)?;
        Ok(Vote::from_anomalous(
            self.reachability(x).is_none_or(|r| r > self.reach_threshold),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_ordering() {
        let pts: Vec<Vec<f64>> = [0.0, 1.0, 2.0, 10.0].iter().map(|&v| vec![v]).collect();
        let o = optics_order(&pts, 2);
        assert_eq!(o.order, vec![0, 1, 2, 3]);
        assert_eq!(o.reach, vec![None, Some(1.0), Some(1.0), Some(8.0)]);
    }

    #[test]
    fn far_point_is_flagged() {
        let train: Vec<Vec<f64>> = (0..30).map(|i| vec![(i % 6) as f64, (i / 6) as f64]).collect();
        let m = fit_optics(&train, 5, 99.0).unwrap();
        assert_eq!(m.predict(&[2.5, 2.0]).unwrap(), Vote::Normal);
        assert_eq!(m.predict(&[40.0, 40.0]).unwrap(), Vote::Anomaly);
    }
}
