//! Five unsupervised point detectors sharing one fit-on-normal, vote-per-point
//! contract, on raw (unscaled) feature vectors.

mod dbscan;
mod kmeans;
mod lof;
mod ocsvm;
mod optics;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::telemetry::{Feature, LogRecord};

pub use dbscan::{default_eps, fit_dbscan, DbscanModel};
pub use kmeans::{fit_kmeans, KMeansModel};
pub use lof::{fit_lof, LofModel};
pub use ocsvm::{default_gamma, fit_ocsvm, OcsvmModel, OcsvmParams};
pub use optics::{fit_optics, optics_order, OpticsModel, OpticsOrder};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectorError {
    #[error("need at least {needed} training points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("invalid detector parameter: {0}")]
    InvalidParams(String),
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("solver did not converge within {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("model bundle: {0}")]
    Bundle(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Vote {
    Anomaly,
    Normal,
}

impl Vote {
    pub fn from_anomalous(flag: bool) -> Vote {
        if flag {
            Vote::Anomaly
        } else {
            Vote::Normal
        }
    }

    pub fn is_anomaly(self) -> bool {
        self == Vote::Anomaly
    }
}

/// The uniform prediction contract.
pub trait Detector: Send + Sync {
    /// Short tag used in verdict lines.
    fn tag(&self) -> &'static str;
    fn dim(&self) -> usize;
    fn predict(&self, x: &[f64]) -> Result<Vote, DetectorError>;
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Linear-interpolation percentile (`p` in 0..=100) of unsorted values.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of an empty sample");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = (p / 100.0).clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Checks that every point is finite and shares one dimension; returns it.
pub(crate) fn check_points(points: &[Vec<f64>]) -> Result<usize, DetectorError> {
    let d = points.first().map_or(0, Vec::len);
    for p in points {
        if p.len() != d {
            return Err(DetectorError::DimensionMismatch {
                expected: d,
                got: p.len(),
            });
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(DetectorError::InvalidParams(
                "training point has a non-finite value".into(),
            ));
        }
    }
    Ok(d)
}

pub(crate) fn check_query(dim: usize, x: &[f64]) -> Result<(), DetectorError> {
    if x.len() != dim {
        return Err(DetectorError::DimensionMismatch {
            expected: dim,
            got: x.len(),
        });
    }
    Ok(())
}

/// The feature subset fed to the detectors, in order. Heading is left out: it
/// follows the mission geometry rather than the vehicle's health.
pub fn default_features() -> Vec<Feature> {
    vec![
        Feature::RelAlt,
        Feature::Roll,
        Feature::Pitch,
        Feature::Throttle,
        Feature::Groundspeed,
        Feature::Climb,
    ]
}

pub fn feature_vector(record: &LogRecord, features: &[Feature]) -> Vec<f64> {
    features.iter().map(|&f| record.get(f)).collect()
}

/// Every knob of the five detectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    pub features: Vec<Feature>,
    /// Training records beyond this are thinned by an even stride.
    pub max_train: usize,
    pub seed: u64,
    pub kmeans_k: usize,
    pub kmeans_percentile: f64,
    pub kmeans_max_iter: usize,
    /// Fixed DBSCAN radius; derived from `dbscan_eps_percentile` when absent.
    pub dbscan_eps: Option<f64>,
    pub dbscan_eps_percentile: f64,
    pub dbscan_min_pts: usize,
    pub optics_min_pts: usize,
    pub optics_percentile: f64,
    pub lof_k: usize,
    pub lof_threshold: f64,
    pub ocsvm_nu: f64,
    /// Fixed RBF width; derived from the training variance when absent.
    pub ocsvm_gamma: Option<f64>,
    pub ocsvm_tol: f64,
    pub ocsvm_max_iter: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            features: default_features(),
            max_train: 2000,
            seed: 0,
            kmeans_k: 5,
            kmeans_percentile: 99.5,
            kmeans_max_iter: 300,
            dbscan_eps: None,
            dbscan_eps_percentile: 90.0,
            dbscan_min_pts: 5,
            optics_min_pts: 5,
            optics_percentile: 99.0,
            lof_k: 20,
            lof_threshold: 1.5,
            ocsvm_nu: 0.05,
            ocsvm_gamma: None,
            ocsvm_tol: 1e-6,
            ocsvm_max_iter: 10_000_000,
        }
    }
}

/// Evenly strided subsample of at most `max` items, always keeping the first.
pub fn stride_sample<T: Clone>(items: &[T], max: usize) -> Vec<T> {
    if items.len() <= max {
        return items.to_vec();
    }
    (0..max).map(|i| items[i * items.len() / max].clone()).collect()
}

pub const DETECTOR_TAGS: [&str; 5] = ["KM", "DB", "OP", "LOF", "SVM"];

/// The five fitted detectors with the feature order they were trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub version: u32,
    pub features: Vec<Feature>,
    pub config: DetectorConfig,
    pub train_size: usize,
    pub kmeans: KMeansModel,
    pub dbscan: DbscanModel,
    pub optics: OpticsModel,
    pub lof: LofModel,
    pub ocsvm: OcsvmModel,
}

pub const BUNDLE_VERSION: u32 = 1;

impl ModelBundle {
    /// Fits all five detectors on the (subsampled) training points.
    pub fn fit(train: &[Vec<f64>], config: &DetectorConfig) -> Result<Self, DetectorError> {
        let dim = check_points(train)?;
        if dim != config.features.len() {
            return Err(DetectorError::DimensionMismatch {
                expected: config.features.len(),
                got: dim,
            });
        }
        let train = stride_sample(train, config.max_train);
        let eps = match config.dbscan_eps {
            Some(e) => e,
            None => default_eps(&train, 4, config.dbscan_eps_percentile)?,
        };
        let gamma = match config.ocsvm_gamma {
            Some(g) => g,
            None => default_gamma(&train),
        };
        let params = OcsvmParams {
            nu: config.ocsvm_nu,
            gamma,
            tol: config.ocsvm_tol,
            max_iter: config.ocsvm_max_iter,
            seed: config.seed,
        };
        Ok(ModelBundle {
            version: BUNDLE_VERSION,
            features: config.features.clone(),
            config: config.clone(),
            train_size: train.len(),
            kmeans: fit_kmeans(
                &train,
                config.kmeans_k,
                config.seed,
                config.kmeans_max_iter,
                config.kmeans_percentile,
            )?,
            dbscan: fit_dbscan(&train, eps, config.dbscan_min_pts)?,
            optics: fit_optics(&train, config.optics_min_pts, config.optics_percentile)?,
            lof: fit_lof(&train, config.lof_k, config.lof_threshold)?,
            ocsvm: fit_ocsvm(&train, &params)?,
        })
    }

    /// Fits on the configured features of `records`.
    pub fn fit_records(records: &[&LogRecord], config: &DetectorConfig) -> Result<Self, DetectorError> {
        let points: Vec<Vec<f64>> = records
            .iter()
            .map(|r| feature_vector(r, &config.features))
            .collect();
        Self::fit(&points, config)
    }

    pub fn detectors(&self) -> [&dyn Detector; 5] {
        [
            &self.kmeans,
            &self.dbscan,
            &self.optics,
            &self.lof,
            &self.ocsvm,
        ]
    }

    /// Votes in [`DETECTOR_TAGS`] order.
    pub fn votes(&self, x: &[f64]) -> Result<[Vote; 5], DetectorError> {
        let d = self.detectors();
        Ok([
            d[0].predict(x)?,
            d[1].predict(x)?,
            d[2].predict(x)?,
            d[3].predict(x)?,
            d[4].predict(x)?,
        ])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("bundles always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, DetectorError> {
        let b: ModelBundle =
            serde_json::from_str(text).map_err(|e| DetectorError::Bundle(e.to_string()))?;
        if b.version != BUNDLE_VERSION {
            return Err(DetectorError::Bundle(format!(
                "bundle version {} is not supported (expected {BUNDLE_VERSION})",
                b.version
            )));
        }
        let dim = b.features.len();
        for d in b.detectors() {
            if d.dim() != dim {
                return Err(DetectorError::Bundle(format!(
                    "{} model has {} features, bundle lists {dim}",
                    d.tag(),
                    d.dim()
                )));
            }
        }
        Ok(b)
    }
}
