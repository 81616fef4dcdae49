//! Metrics, fusion ablation, per-point timing and the simulated experiment
//! harness.

use std::fmt::{self, Write as _};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detectors::{feature_vector, DetectorConfig, DetectorError, ModelBundle, Vote, DETECTOR_TAGS};
use crate::ensemble::{decide, detect_log, vote, EnsembleError, Fusion, PointVerdict, WindowConfig};
use crate::phases::{segment, PhaseConfig, PhaseError, PhaseTracker};
use crate::rules::{mine_rules, MiningConfig, RuleError, RuleSet};
use crate::simkit::{base_mission, random_mission, simulate, windy_pair, FaultSpec, LabeledLog, SimError};
use crate::telemetry::{Feature, FlightLog, LogRecord};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{verdicts} verdicts but {labels} labels")]
    LengthMismatch { verdicts: usize, labels: usize },
    #[error("nothing to benchmark: the stream is empty")]
    EmptyStream,
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Rules(#[from] RuleError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Phase(#[from] PhaseError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Confusion counts with recall and false-positive rate; a rate is `None`
/// when its denominator is zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub counts: Counts,
    pub recall: Option<f64>,
    pub false_positive_rate: Option<f64>,
}

impl Metrics {
    pub fn from_counts(counts: Counts) -> Self {
        let ratio = |a: usize, b: usize| (a + b > 0).then(|| a as f64 / (a + b) as f64);
        Metrics {
            counts,
            recall: ratio(counts.tp, counts.fn_),
            false_positive_rate: ratio(counts.fp, counts.tn),
        }
    }
}

pub fn evaluate(finals: &[Vote], labels: &[bool]) -> Result<Metrics, EvalError> {
    if finals.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            verdicts: finals.len(),
            labels: labels.len(),
        });
    }
    let mut c = Counts::default();
    for (v, &truth) in finals.iter().zip(labels) {
        match (v.is_anomaly(), truth) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(Metrics::from_counts(c))
}

/// The same verdicts scored under each fusion, plus every detector alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ablation {
    pub rules_only: Metrics,
    pub ensemble_only: Metrics,
    pub combined: Metrics,
    /// In detector tag order.
    pub per_detector: Vec<Metrics>,
}

impl Ablation {
    pub fn get(&self, fusion: Fusion) -> &Metrics {
        match fusion {
            Fusion::RulesOnly => &self.rules_only,
            Fusion::EnsembleOnly => &self.ensemble_only,
            Fusion::Combined => &self.combined,
        }
    }
}

pub fn ablate(verdicts: &[PointVerdict], labels: &[bool]) -> Result<Ablation, EvalError> {
    let under = |f: Fusion| -> Vec<Vote> { verdicts.iter().map(|v| v.under(f)).collect() };
    let per_detector = (0..DETECTOR_TAGS.len())
        .map(|i| {
            let votes: Vec<Vote> = verdicts
                .iter()
                .map(|v| v.ensemble.map_or(Vote::Normal, |e| e.votes[i]))
                .collect();
            evaluate(&votes, labels)
        })
        .collect::<Result<_, _>>()?;
    Ok(Ablation {
        rules_only: evaluate(&under(Fusion::RulesOnly), labels)?,
        ensemble_only: evaluate(&under(Fusion::EnsembleOnly), labels)?,
        combined: evaluate(&under(Fusion::Combined), labels)?,
        per_detector,
    })
}

/// Records a run is scored on: the labelled interval of a faulty run, or
/// every record of a clean one.
pub fn scored_mask(labeled: &LabeledLog) -> Vec<bool> {
    if labeled.anomaly_mask.iter().any(|&a| a) {
        labeled.anomaly_mask.clone()
    } else {
        vec![true; labeled.anomaly_mask.len()]
    }
}

/// Runs the pipeline over whole logs (so phases have their full context) and
/// ablates over the scored records of each.
pub fn run_ablation(
    corpus: &[LabeledLog],
    rules: &RuleSet,
    models: Option<&ModelBundle>,
    phase_config: PhaseConfig,
) -> Result<Ablation, EvalError> {
    let mut verdicts = Vec::new();
    let mut labels = Vec::new();
    for labeled in corpus {
        let det = detect_log(rules, models, &labeled.log, phase_config, WindowConfig::default())?;
        for ((v, &keep), &truth) in det
            .verdicts
            .into_iter()
            .zip(&scored_mask(labeled))
            .zip(&labeled.anomaly_mask)
        {
            if keep {
                verdicts.push(v);
                labels.push(truth);
            }
        }
    }
    ablate(&verdicts, &labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub samples: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub max_ms: f64,
}

impl Timing {
    fn from_ms(mut ms: Vec<f64>) -> Self {
        ms.sort_by(f64::total_cmp);
        let n = ms.len();
        let median = if n % 2 == 1 {
            ms[n / 2]
        } else {
            0.5 * (ms[n / 2 - 1] + ms[n / 2])
        };
        Timing {
            samples: n,
            mean_ms: ms.iter().sum::<f64>() / n as f64,
            median_ms: median,
            max_ms: ms[n - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub rule_checking: Timing,
    /// `(tag, timing)` per detector; empty without models.
    pub detectors: Vec<(String, Timing)>,
    pub pipeline: Timing,
    pub pipeline_without_optics: Timing,
}

/// Wall time per record, single-threaded, for each stage of the pipeline.
pub fn benchmark_latency(
    models: Option<&ModelBundle>,
    rules: &RuleSet,
    log: &FlightLog,
    phase_config: PhaseConfig,
) -> Result<LatencyReport, EvalError> {
    if log.records.is_empty() {
        return Err(EvalError::EmptyStream);
    }
    let meta = log.meta.clone().ok_or(PhaseError::MissingMetadata)?;
    let mut tracker = PhaseTracker::new(meta, phase_config);
    let n_det = models.map_or(0, |m| m.detectors().len());
    let mut rule_ms = Vec::new();
    let mut det_ms = vec![Vec::new(); n_det];
    let mut full_ms = Vec::new();
    let mut no_optics_ms = Vec::new();
    let ms = |t: Instant| t.elapsed().as_secs_f64() * 1e3;

    for (i, record) in log.records.iter().enumerate() {
        let t = Instant::now();
        let phase = tracker.step(record);
        let violations = rules.check_record(i, record, phase);
        let rules_time = ms(t);

        let mut votes = Vec::with_capacity(n_det);
        let mut optics_time = 0.0;
        if let Some(m) = models {
            let t = Instant::now();
            let x = feature_vector(record, &m.features);
            let extract_time = ms(t);
            for (k, d) in m.detectors().iter().enumerate() {
                let t = Instant::now();
                votes.push(d.predict(&x)?);
                let took = ms(t);
                if d.tag() == "OP" {
                    optics_time = took;
                }
                det_ms[k].push(took);
            }
            let t = Instant::now();
            let e = vote(&votes)?;
            let fuse = decide(i, record.timestamp_ms, phase, violations, Some(e));
            std::hint::black_box(fuse);
            let total = rules_time + extract_time + det_ms.iter().map(|d| d[i]).sum::<f64>() + ms(t);
            full_ms.push(total);
            no_optics_ms.push(total - optics_time);
        } else {
            let t = Instant::now();
            let fuse = decide(i, record.timestamp_ms, phase, violations, None);
            std::hint::black_box(fuse);
            full_ms.push(rules_time + ms(t));
            no_optics_ms.push(rules_time + ms(t));
        }
        rule_ms.push(rules_time);
    }
    Ok(LatencyReport {
        rule_checking: Timing::from_ms(rule_ms),
        detectors: DETECTOR_TAGS
            .iter()
            .zip(det_ms)
            .map(|(tag, v)| (tag.to_string(), Timing::from_ms(v)))
            .collect(),
        pipeline: Timing::from_ms(full_ms),
        pipeline_without_optics: Timing::from_ms(no_optics_ms),
    })
}

impl fmt::Display for LatencyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<24} {:>10} {:>10} {:>10}", "stage", "mean ms", "median ms", "max ms")?;
        let mut row = |name: &str, t: &Timing| {
            writeln!(f, "{name:<24} {:>10.4} {:>10.4} {:>10.4}", t.mean_ms, t.median_ms, t.max_ms)
        };
        row("rule checking", &self.rule_checking)?;
        for (tag, t) in &self.detectors {
            row(tag, t)?;
        }
        row("pipeline", &self.pipeline)?;
        row("pipeline without OP", &self.pipeline_without_optics)
    }
}

/// The simulated run families used for evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteKind {
    Clean,
    StrongWind,
    MildWind,
    Actuator,
    RollStuck,
    BaroStuck,
    Crash,
}

impl SuiteKind {
    pub const ALL: [SuiteKind; 7] = [
        SuiteKind::Clean,
        SuiteKind::StrongWind,
        SuiteKind::MildWind,
        SuiteKind::Actuator,
        SuiteKind::RollStuck,
        SuiteKind::BaroStuck,
        SuiteKind::Crash,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SuiteKind::Clean => "clean random",
            SuiteKind::StrongWind => "strong wind",
            SuiteKind::MildWind => "mild wind",
            SuiteKind::Actuator => "actuator 0.7",
            SuiteKind::RollStuck => "roll stuck at pi",
            SuiteKind::BaroStuck => "baro stuck at 0",
            SuiteKind::Crash => "engine cutoff",
        }
    }

    fn seed_offset(self) -> u64 {
        SuiteKind::ALL.iter().position(|&k| k == self).unwrap() as u64 * 1000
    }
}

/// One run of `kind` on a random mission. All randomness flows from `seed`.
pub fn suite_run(kind: SuiteKind, seed: u64) -> Result<LabeledLog, SimError> {
    let mission = random_mission(seed);
    let whole = |f: &dyn Fn(i64, i64) -> FaultSpec| f(0, mission.duration_bound_ms());
    match kind {
        SuiteKind::Clean => simulate(&mission, &[], seed),
        SuiteKind::StrongWind => Ok(windy_pair(&mission, seed)?.0),
        SuiteKind::MildWind => Ok(windy_pair(&mission, seed)?.1),
        SuiteKind::Actuator => simulate(
            &mission,
            &[whole(&|start_ms, end_ms| FaultSpec::ActuatorCapacity {
                factor: 0.7,
                start_ms,
                end_ms,
            })],
            seed,
        ),
        SuiteKind::RollStuck => simulate(
            &mission,
            &[whole(&|start_ms, end_ms| FaultSpec::SensorStuck {
                feature: Feature::Roll,
                stuck_value: std::f64::consts::PI,
                start_ms,
                end_ms,
            })],
            seed,
        ),
        SuiteKind::BaroStuck => simulate(
            &mission,
            &[whole(&|start_ms, end_ms| FaultSpec::SensorStuck {
                feature: Feature::BaroStatus,
                stuck_value: 0.0,
                start_ms,
                end_ms,
            })],
            seed,
        ),
        SuiteKind::Crash => {
            // cut the engine halfway through the fault-free flight
            let clean = simulate(&mission, &[], seed)?;
            let end = clean.log.records.last().map_or(0, |r| r.timestamp_ms);
            simulate(&mission, &[FaultSpec::EngineCutoff { at_ms: end / 2 }], seed)
        }
    }
}

pub fn build_suite(kind: SuiteKind, runs: usize, seed: u64) -> Result<Vec<LabeledLog>, SimError> {
    (0..runs as u64)
        .map(|i| suite_run(kind, seed + kind.seed_offset() + i))
        .collect()
}

/// Clean flights of the base mission.
pub fn training_corpus(missions: usize, seed: u64) -> Result<Vec<LabeledLog>, SimError> {
    let m = base_mission();
    (0..missions as u64).map(|i| simulate(&m, &[], seed + i)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub training_missions: usize,
    pub runs_per_suite: usize,
    pub training_seed: u64,
    pub suite_seed: u64,
    pub suites: Vec<SuiteKind>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            training_missions: 30,
            runs_per_suite: 5,
            training_seed: 1000,
            suite_seed: 50_000,
            suites: SuiteKind::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub kind: SuiteKind,
    pub runs: usize,
    pub scored_records: usize,
    pub ablation: Ablation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rule_count: usize,
    pub training_records: usize,
    pub suites: Vec<SuiteResult>,
}

/// Artifacts trained on the clean corpus.
pub struct Trained {
    pub rules: RuleSet,
    pub models: ModelBundle,
    pub training_records: usize,
}

pub fn train(
    corpus: &[LabeledLog],
    phase_config: PhaseConfig,
    mining: &MiningConfig,
    detectors: &DetectorConfig,
) -> Result<Trained, EvalError> {
    let annotated = corpus
        .iter()
        .map(|l| segment(&l.log, phase_config))
        .collect::<Result<Vec<_>, _>>()?;
    let rules = mine_rules(&annotated, Vec::new(), mining)?.ruleset;
    let records: Vec<&LogRecord> = corpus.iter().flat_map(|l| &l.log.records).collect();
    let models = ModelBundle::fit_records(&records, detectors)?;
    Ok(Trained {
        rules,
        models,
        training_records: records.len(),
    })
}

/// Trains on clean base-mission flights and scores every configured suite.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    phase_config: PhaseConfig,
    mining: &MiningConfig,
    detectors: &DetectorConfig,
) -> Result<ExperimentReport, EvalError> {
    let corpus = training_corpus(cfg.training_missions, cfg.training_seed)?;
    let trained = train(&corpus, phase_config, mining, detectors)?;
    let suites = cfg
        .suites
        .iter()
        .map(|&kind| {
            let logs = build_suite(kind, cfg.runs_per_suite, cfg.suite_seed)?;
            let scored_records = logs
                .iter()
                .map(|l| scored_mask(l).iter().filter(|&&k| k).count())
                .sum();
            Ok(SuiteResult {
                kind,
                runs: logs.len(),
                scored_records,
                ablation: run_ablation(&logs, &trained.rules, Some(&trained.models), phase_config)?,
            })
        })
        .collect::<Result<_, EvalError>>()?;
    Ok(ExperimentReport {
        rule_count: trained.rules.rules.len(),
        training_records: trained.training_records,
        suites,
    })
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "N/A".to_string(), |x| format!("{:.2}", 100.0 * x))
}

impl ExperimentReport {
    /// Recall for faulty suites and false-positive rate for the clean one,
    /// in percent, per fusion and per detector.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} rules mined from {} training records",
            self.rule_count, self.training_records
        );
        let _ = write!(
            out,
            "{:<18} {:>7} {:>6} {:>10} {:>10} {:>10}",
            "suite", "records", "metric", "rules", "ensemble", "combined"
        );
        for tag in DETECTOR_TAGS {
            let _ = write!(out, " {tag:>7}");
        }
        out.push('\n');
        for s in &self.suites {
            let clean = s.kind == SuiteKind::Clean;
            let pick = |m: &Metrics| if clean { m.false_positive_rate } else { m.recall };
            let a = &s.ablation;
            let _ = write!(
                out,
                "{:<18} {:>7} {:>6} {:>10} {:>10} {:>10}",
                s.kind.name(),
                s.scored_records,
                if clean { "FPR" } else { "recall" },
                pct(pick(&a.rules_only)),
                pct(pick(&a.ensemble_only)),
                pct(pick(&a.combined)),
            );
            for m in &a.per_detector {
                let _ = write!(out, " {:>7}", pct(pick(m)));
            }
            out.push('\n');
        }
        out
    }
}
