//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use flightwatch::detectors::OcsvmModel;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Linear-interpolation percentile over a sorted copy.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = (v.len() - 1) as f64 * p / 100.0;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if frac == 0.0 {
        v[lo]
    } else {
        v[lo] + frac * (v[lo + 1] - v[lo])
    }
}

/// DBSCAN vote: normal iff within `eps` of a point that has `min_pts`
/// training points (itself included) within `eps`.
pub fn dbscan_is_anomaly(train: &[Vec<f64>], eps: f64, min_pts: usize, x: &[f64]) -> bool {
    !train.iter().any(|c| {
        let neighbours = train.iter().filter(|q| dist(c, q) <= eps).count();
        neighbours >= min_pts && dist(c, x) <= eps
    })
}

/// Textbook OPTICS with a lazy-deletion heap; returns reachability per point
/// (`None` for component starts).
pub fn optics_reachability(points: &[Vec<f64>], min_pts: usize) -> Vec<Option<f64>> {
    let n = points.len();
    let d: Vec<Vec<f64>> = points.iter().map(|a| points.iter().map(|b| dist(a, b)).collect()).collect();
    let core: Vec<Option<f64>> = d
        .iter()
        .map(|row| {
            let mut r = row.clone();
            r.sort_by(|a, b| a.partial_cmp(b).unwrap());
            r.get(min_pts - 1).copied()
        })
        .collect();
    let mut reach: Vec<Option<f64>> = vec![None; n];
    let mut done = vec![false; n];
    for s in 0..n {
        if done[s] {
            continue;
        }
        done[s] = true;
        // non-negative f64 bit patterns order like the values
        let mut heap: BinaryHeap<Reverse<(u64, usize)>> = BinaryHeap::new();
        let update = |p: usize, done: &[bool], reach: &mut Vec<Option<f64>>, heap: &mut BinaryHeap<Reverse<(u64, usize)>>| {
            if let Some(cd) = core[p] {
                for o in 0..n {
                    if done[o] {
                        continue;
                    }
                    let r = cd.max(d[p][o]);
                    if reach[o].is_none_or(|old| r < old) {
                        reach[o] = Some(r);
                        heap.push(Reverse((r.to_bits(), o)));
                    }
                }
            }
        };
        update(s, &done, &mut reach, &mut heap);
        while let Some(Reverse((bits, q))) = heap.pop() {
            if done[q] || reach[q] != Some(f64::from_bits(bits)) {
                continue;
            }
            done[q] = true;
            update(q, &done, &mut reach, &mut heap);
        }
    }
    reach
}

/// OPTICS vote for `x` against a model fitted on `train`.
pub fn optics_is_anomaly(train: &[Vec<f64>], min_pts: usize, pct: f64, x: &[f64]) -> bool {
    let train_reach: Vec<f64> = optics_reachability(train, min_pts).into_iter().flatten().collect();
    let threshold = percentile(&train_reach, pct);
    let mut aug = train.to_vec();
    aug.push(x.to_vec());
    match optics_reachability(&aug, min_pts)[train.len()] {
        Some(r) => r > threshold,
        None => true,
    }
}

/// k nearest neighbourhood (ties included) of `q` among `pts`, skipping index `skip`.
fn knn(pts: &[Vec<f64>], q: &[f64], k: usize, skip: Option<usize>) -> (f64, Vec<usize>) {
    let mut ds: Vec<(f64, usize)> = pts
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != skip)
        .map(|(i, p)| (dist(p, q), i))
        .collect();
    ds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let kd = ds[k - 1].0;
    (kd, ds.iter().filter(|(d, _)| *d <= kd).map(|&(_, i)| i).collect())
}

/// Local outlier factor of `x` relative to `train`.
pub fn lof_score(train: &[Vec<f64>], k: usize, x: &[f64]) -> f64 {
    let kdist: Vec<f64> = (0..train.len()).map(|i| knn(train, &train[i], k, Some(i)).0).collect();
    let lrd = |q: &[f64], skip: Option<usize>| {
        let (_, hood) = knn(train, q, k, skip);
        let mean = hood.iter().map(|&o| kdist[o].max(dist(q, &train[o]))).sum::<f64>() / hood.len() as f64;
        1.0 / (mean + 1e-10)
    };
    let (_, hood) = knn(train, x, k, None);
    let own = lrd(x, None);
    hood.iter().map(|&o| lrd(&train[o], Some(o)) / own).sum::<f64>() / hood.len() as f64
}

/// Every itemset with support count / n >= min_support, by exhaustive
/// enumeration over the item universe.
pub fn brute_frequent(transactions: &[BTreeSet<u32>], min_support: f64) -> BTreeSet<(Vec<u32>, usize)> {
    let universe: Vec<u32> = transactions.iter().flatten().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let n = transactions.len();
    let mut out = BTreeSet::new();
    for mask in 1u32..(1 << universe.len()) {
        let set: Vec<u32> = (0..universe.len()).filter(|b| mask >> b & 1 == 1).map(|b| universe[b]).collect();
        let count = transactions.iter().filter(|t| set.iter().all(|i| t.contains(i))).count();
        if count as f64 / n as f64 >= min_support {
            out.insert((set, count));
        }
    }
    out
}

pub fn gaussian(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect()).collect()
}

/// Largest KKT violation recomputed from the returned coefficients.
pub fn kkt_residual(train: &[Vec<f64>], m: &OcsvmModel) -> f64 {
    let c = 1.0 / (m.nu * train.len() as f64);
    let mut alpha = vec![0.0; train.len()];
    for (&i, &a) in m.support_indices.iter().zip(&m.coefficients) {
        alpha[i] = a;
    }
    let grad: Vec<f64> = train
        .iter()
        .map(|x| {
            m.support_vectors
                .iter()
                .zip(&m.coefficients)
                .map(|(sv, a)| a * (-m.gamma * dist(sv, x).powi(2)).exp())
                .sum()
        })
        .collect();
    let up = (0..train.len()).filter(|&i| alpha[i] < c).map(|i| grad[i]).fold(f64::INFINITY, f64::min);
    let low = (0..train.len()).filter(|&i| alpha[i] > 0.0).map(|i| grad[i]).fold(f64::NEG_INFINITY, f64::max);
    (low - up).max(0.0)
}
