use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_points, check_query, Detector, DetectorError, Vote};

#[derive(Debug, Clone, PartialEq)]
pub struct OcsvmParams {
    pub nu: f64,
    pub gamma: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcsvmModel {
    pub gamma: f64,
    pub nu: f64,
    pub rho: f64,
    /// Decisions within this distance of zero are on the boundary; set to
    /// the solver tolerance, below which boundary points are indistinguishable.
    pub margin: f64,
    pub support_vectors: Vec<Vec<f64>>,
    /// Positions of the support vectors in the training set.
    pub support_indices: Vec<usize>,
    /// Dual coefficients of the support vectors; all coefficients sum to one.
    pub coefficients: Vec<f64>,
    pub iterations: usize,
    /// Maximal KKT violation at termination.
    pub kkt_violation: f64,
}

pub(crate) fn rbf(gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

/// `1 / (d * mean per-feature variance)`, or 1 for constant data.
pub fn default_gamma(train: &[Vec<f64>]) -> f64 {
    let d = train.first().map_or(0, Vec::len);
    if d == 0 {
        return 1.0;
    }
    let n = train.len() as f64;
    let mut var_sum = 0.0;
    for j in 0..d {
        let mean = train.iter().map(|p| p[j]).sum::<f64>() / n;
        var_sum += train.iter().map(|p| (p[j] - mean).powi(2)).sum::<f64>() / n;
    }
    let mean_var = var_sum / d as f64;
    if mean_var > 0.0 {
        1.0 / (d as f64 * mean_var)
    } else {
        1.0
    }
}

/// Solves `min ½ αᵀKα` subject to `0 ≤ α ≤ 1/(νn)`, `Σα = 1` by sequential
/// minimal optimisation over maximal violating pairs.
pub fn fit_ocsvm(train: &[Vec<f64>], p: &OcsvmParams) -> Result<OcsvmModel, DetectorError> {
    if !(p.nu > 0.0 && p.nu <= 1.0) {
        return Err(DetectorError::InvalidParams(format!("nu must be in (0, 1], got {}", p.nu)));
    }
    if !(p.gamma > 0.0 && p.gamma.is_finite()) {
        return Err(DetectorError::InvalidParams(format!("gamma must be positive, got {}", p.gamma)));
    }
    if p.tol.is_nan() || p.tol <= 0.0 {
        return Err(DetectorError::InvalidParams(format!("tolerance must be positive, got {}", p.tol)));
    }
    if train.len() < 2 {
        return Err(DetectorError::TooFewPoints {
            needed: 2,
            got: train.len(),
        });
    }
    check_points(train)?;
    let n = train.len();
    let c = 1.0 / (p.nu * n as f64);

    let kernel: Vec<Vec<f64>> = train
        .iter()
        .map(|a| train.iter().map(|b| rbf(p.gamma, a, b)).collect())
        .collect();

    // start from a feasible point: fill whole coefficients in a seeded order
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(p.seed));
    let mut alpha = vec![0.0; n];
    let mut left = 1.0;
    for &i in &perm {
        if left <= 0.0 {
            break;
        }
        alpha[i] = c.min(left);
        left -= alpha[i];
    }

    let full_gradient = |alpha: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| (0..n).map(|j| kernel[i][j] * alpha[j]).sum())
            .collect()
    };
    let mut grad = full_gradient(&alpha);
    let mut refreshed = false;

    let mut iterations = 0;
    let kkt_violation = loop {
        // i may grow (below the cap), j may shrink (above zero)
        let mut i = usize::MAX;
        let mut j = usize::MAX;
        for t in 0..n {
            if alpha[t] < c && (i == usize::MAX || grad[t] < grad[i]) {
                i = t;
            }
            if alpha[t] > 0.0 && (j == usize::MAX || grad[t] > grad[j]) {
                j = t;
            }
        }
        let gap = if i == usize::MAX || j == usize::MAX {
            0.0
        } else {
            grad[j] - grad[i]
        };
        if gap <= p.tol {
            // confirm against a fresh gradient so incremental drift cannot
            // hide a violation
            if refreshed {
                break gap.max(0.0);
            }
            grad = full_gradient(&alpha);
            refreshed = true;
            continue;
        }
        refreshed = false;
        if iterations >= p.max_iter {
            return Err(DetectorError::NoConvergence { iterations });
        }
        iterations += 1;
        let curv = (kernel[i][i] + kernel[j][j] - 2.0 * kernel[i][j]).max(1e-12);
        let delta = (gap / curv).min(c - alpha[i]).min(alpha[j]);
        alpha[i] += delta;
        alpha[j] -= delta;
        // snap to the box to keep the bound tests exact
        if c - alpha[i] < 1e-15 * c {
            alpha[i] = c;
        }
        if alpha[j] < 1e-15 * c {
            alpha[j] = 0.0;
        }
        for t in 0..n {
            grad[t] += delta * (kernel[t][i] - kernel[t][j]);
        }
    };

    let rho = offset(&alpha, &grad, c);
    let support_indices: Vec<usize> = (0..n).filter(|&i| alpha[i] > 0.0).collect();
    let support_vectors = support_indices.iter().map(|&i| train[i].clone()).collect();
    let coefficients = support_indices.iter().map(|&i| alpha[i]).collect();
    Ok(OcsvmModel {
        gamma: p.gamma,
        nu: p.nu,
        rho,
        margin: p.tol,
        support_vectors,
        support_indices,
        coefficients,
        iterations,
        kkt_violation,
    })
}

/// Mean gradient over free coefficients, else the midpoint of the bound-implied interval.
fn offset(alpha: &[f64], grad: &[f64], c: f64) -> f64 {
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut free_sum = 0.0;
    let mut free = 0usize;
    for (&a, &g) in alpha.iter().zip(grad) {
        if a >= c {
            lb = lb.max(g);
        } else if a <= 0.0 {
            ub = ub.min(g);
        } else {
            free += 1;
            free_sum += g;
        }
    }
    if free > 0 {
        free_sum / free as f64
    } else {
        (ub + lb) / 2.0
    }
}

impl OcsvmModel {
    /// Positive inside the learned support, negative outside. Points are
    /// voted anomalous only below `-margin`.
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.coefficients)
            .map(|(sv, a)| a * rbf(self.gamma, sv, x))
            .sum::<f64>()
            - self.rho
    }
}

impl Detector for OcsvmModel {
    fn tag(&self) -> &'static str {
        "SVM"
    }

    fn dim(&self) -> usize {
        self.support_vectors[0].len()
    }

    fn predict(&self, x: &[f64]) -> Result<Vote, DetectorError> {
        check_query(self.dim(), x)?;
        Ok(Vote::from_anomalous(self.decision(x) < -self.margin))
    }
}
