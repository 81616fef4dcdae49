//! Majority voting, rule/ensemble fusion and windowed alerting.

use std::collections::VecDeque;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detectors::{feature_vector, DetectorError, ModelBundle, Vote, DETECTOR_TAGS};
use crate::phases::{MissionPhase, PhaseConfig, PhaseError, PhaseTracker};
use crate::rules::{check_latency, RuleSet, Violation};
use crate::telemetry::{CommandEvent, FlightLog, LogRecord, MissionMeta};

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("expected {expected} votes, got {got}")]
    WrongArity { expected: usize, got: usize },
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Phase(#[from] PhaseError),
    #[error("invalid window settings: {0}")]
    InvalidWindow(String),
}

pub const MAJORITY: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleVerdict {
    /// In [`DETECTOR_TAGS`] order.
    pub votes: [Vote; 5],
    pub majority: Vote,
}

impl EnsembleVerdict {
    pub fn anomaly_count(&self) -> usize {
        self.votes.iter().filter(|v| v.is_anomaly()).count()
    }

    pub fn votes_text(&self) -> String {
        DETECTOR_TAGS
            .iter()
            .zip(&self.votes)
            .map(|(tag, v)| format!("{tag}:{}", if v.is_anomaly() { 'A' } else { 'N' }))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// At least three of five anomaly votes make an anomalous majority.
pub fn vote(votes: &[Vote]) -> Result<EnsembleVerdict, EnsembleError> {
    let votes: [Vote; 5] = votes.try_into().map_err(|_| EnsembleError::WrongArity {
        expected: 5,
        got: votes.len(),
    })?;
    let count = votes.iter().filter(|v| v.is_anomaly()).count();
    Ok(EnsembleVerdict {
        votes,
        majority: Vote::from_anomalous(count >= MAJORITY),
    })
}

/// Which evidence the final verdict is allowed to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    Combined,
    RulesOnly,
    EnsembleOnly,
}

impl Fusion {
    pub const ALL: [Fusion; 3] = [Fusion::RulesOnly, Fusion::EnsembleOnly, Fusion::Combined];

    pub fn apply(self, rules_broken: bool, majority: Vote) -> Vote {
        let ens = majority.is_anomaly();
        Vote::from_anomalous(match self {
            Fusion::Combined => rules_broken || ens,
            Fusion::RulesOnly => rules_broken,
            Fusion::EnsembleOnly => ens,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointVerdict {
    pub index: usize,
    pub timestamp_ms: i64,
    pub phase: MissionPhase,
    pub rule_violations: Vec<Violation>,
    /// Absent when running without detectors.
    pub ensemble: Option<EnsembleVerdict>,
    pub final_vote: Vote,
    pub explanation: Vec<String>,
}

impl PointVerdict {
    pub fn rules_broken(&self) -> bool {
        !self.rule_violations.is_empty()
    }

    pub fn majority(&self) -> Vote {
        self.ensemble.map_or(Vote::Normal, |e| e.majority)
    }

    /// The verdict this point would get under another fusion.
    pub fn under(&self, fusion: Fusion) -> Vote {
        fusion.apply(self.rules_broken(), self.majority())
    }
}

/// Combines one record's rule violations and ensemble verdict: anomalous if
/// either side flags.
pub fn decide(
    index: usize,
    timestamp_ms: i64,
    phase: MissionPhase,
    rule_violations: Vec<Violation>,
    ensemble: Option<EnsembleVerdict>,
) -> PointVerdict {
    let majority = ensemble.map_or(Vote::Normal, |e| e.majority);
    let final_vote = Fusion::Combined.apply(!rule_violations.is_empty(), majority);
    let mut explanation: Vec<String> = rule_violations.iter().map(|v| v.to_string()).collect();
    if let Some(e) = ensemble.filter(|e| e.majority.is_anomaly()) {
        explanation.push(format!(
            "ensemble majority anomalous ({} of 5): {}",
            e.anomaly_count(),
            e.votes_text()
        ));
    }
    PointVerdict {
        index,
        timestamp_ms,
        phase,
        rule_violations,
        ensemble,
        final_vote,
        explanation,
    }
}

impl fmt::Display for PointVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rules: Vec<&str> = self.rule_violations.iter().map(|v| v.rule.as_str()).collect();
        write!(
            f,
            "ts={} final={} rules=[{}]",
            self.timestamp_ms,
            if self.final_vote.is_anomaly() { "ANOMALY" } else { "NORMAL" },
            rules.join("; ")
        )?;
        if let Some(e) = &self.ensemble {
            write!(f, " votes={}", e.votes_text())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowConfig {
    pub window_len: usize,
    pub alert_fraction: f64,
    pub sustained_run: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            window_len: 10,
            alert_fraction: 0.3,
            sustained_run: 3,
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<(), EnsembleError> {
        if self.window_len == 0 {
            return Err(EnsembleError::InvalidWindow("window_len must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.alert_fraction) {
            return Err(EnsembleError::InvalidWindow(format!(
                "alert_fraction must be in [0, 1), got {}",
                self.alert_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alert {
    pub timestamp_ms: i64,
    pub window_fraction: f64,
    pub run: usize,
    pub explanation: Vec<String>,
}

impl fmt::Display for Alert {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ALERT window_frac={:.2} run={}", self.window_fraction, self.run)
    }
}

/// Ring of recent final verdicts for one stream.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowState {
    config: WindowConfig,
    ring: VecDeque<bool>,
    run: usize,
}

impl WindowState {
    pub fn new(config: WindowConfig) -> Result<Self, EnsembleError> {
        config.validate()?;
        Ok(WindowState {
            config,
            ring: VecDeque::with_capacity(config.window_len),
            run: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.ring.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ring.is_empty()
    }

    /// Anomalous share of the full window length.
    pub fn fraction(&self) -> f64 {
        self.ring.iter().filter(|&&a| a).count() as f64 / self.config.window_len as f64
    }

    pub fn run(&self) -> usize {
        self.run
    }

    /// Records one verdict; alerts when the window is anomalous enough and the
    /// current anomalous run is long enough.
    pub fn stream_step(&mut self, verdict: &PointVerdict) -> Option<Alert> {
        let anomalous = verdict.final_vote.is_anomaly();
        if self.ring.len() == self.config.window_len {
            self.ring.pop_front();
        }
        self.ring.push_back(anomalous);
        self.run = if anomalous { self.run + 1 } else { 0 };
        let fraction = self.fraction();
        (fraction > self.config.alert_fraction && self.run >= self.config.sustained_run).then(|| {
            Alert {
                timestamp_ms: verdict.timestamp_ms,
                window_fraction: fraction,
                run: self.run,
                explanation: verdict.explanation.clone(),
            }
        })
    }
}

/// Online pipeline for one flight: phase tracking, rule and latency checks,
/// detector votes, fusion and alerting.
pub struct Monitor<'a> {
    rules: &'a RuleSet,
    models: Option<&'a ModelBundle>,
    tracker: PhaseTracker,
    window: WindowState,
    /// Commands not yet past their latency deadline, in issue order.
    pending: Vec<CommandEvent>,
    index: usize,
}

impl<'a> Monitor<'a> {
    pub fn new(
        rules: &'a RuleSet,
        models: Option<&'a ModelBundle>,
        meta: MissionMeta,
        phase_config: PhaseConfig,
        window: WindowConfig,
    ) -> Result<Self, EnsembleError> {
        Ok(Monitor {
            rules,
            models,
            tracker: PhaseTracker::new(meta, phase_config),
            window: WindowState::new(window)?,
            pending: Vec::new(),
            index: 0,
        })
    }

    pub fn register_command(&mut self, command: CommandEvent) {
        self.pending.push(command);
    }

    /// Commands whose latency deadline falls before `now_ms`; they are judged
    /// once and forgotten.
    fn due_latency_violations(&mut self, now_ms: i64) -> Vec<Violation> {
        let Some(rule) = &self.rules.latency_rule else {
            return Vec::new();
        };
        let (due, rest): (Vec<CommandEvent>, Vec<CommandEvent>) = self
            .pending
            .drain(..)
            .partition(|c| now_ms - c.issue_ms > rule.max_latency_ms);
        self.pending = rest;
        check_latency(rule, &due, now_ms)
    }

    /// Judges every still-pending command as of `now_ms`, e.g. at end of stream.
    pub fn flush_commands(&mut self, now_ms: i64) -> Vec<Violation> {
        let Some(rule) = &self.rules.latency_rule else {
            self.pending.clear();
            return Vec::new();
        };
        let due: Vec<CommandEvent> = self.pending.drain(..).collect();
        check_latency(rule, &due, now_ms)
    }

    pub fn process(
        &mut self,
        record: &LogRecord,
    ) -> Result<(PointVerdict, Option<Alert>), EnsembleError> {
        let phase = self.tracker.step(record);
        let ensemble = match self.models {
            Some(m) => Some(vote(&m.votes(&feature_vector(record, &m.features))?)?),
            None => None,
        };
        let verdict = self.finish(record, phase, ensemble);
        let alert = self.window.stream_step(&verdict);
        Ok((verdict, alert))
    }

    fn finish(
        &mut self,
        record: &LogRecord,
        phase: MissionPhase,
        ensemble: Option<EnsembleVerdict>,
    ) -> PointVerdict {
        let mut violations = self.rules.check_record(self.index, record, phase);
        violations.extend(self.due_latency_violations(record.timestamp_ms));
        let verdict = decide(self.index, record.timestamp_ms, phase, violations, ensemble);
        self.index += 1;
        verdict
    }
}

/// Output of running a whole log through the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub verdicts: Vec<PointVerdict>,
    pub alerts: Vec<Alert>,
}

impl Detection {
    pub fn anomalies(&self) -> usize {
        self.verdicts.iter().filter(|v| v.final_vote.is_anomaly()).count()
    }
}

/// Batch form of [`Monitor`]: detector votes are computed in parallel, then the
/// stateful steps run in record order.
pub fn detect_log(
    rules: &RuleSet,
    models: Option<&ModelBundle>,
    log: &FlightLog,
    phase_config: PhaseConfig,
    window: WindowConfig,
) -> Result<Detection, EnsembleError> {
    let meta = log.meta.clone().ok_or(PhaseError::MissingMetadata)?;
    let ensembles: Vec<Option<EnsembleVerdict>> = match models {
        Some(m) => log
            .records
            .par_iter()
            .map(|r| Ok(Some(vote(&m.votes(&feature_vector(r, &m.features))?)?)))
            .collect::<Result<_, EnsembleError>>()?,
        None => vec![None; log.records.len()],
    };
    let mut monitor = Monitor::new(rules, models, meta, phase_config, window)?;
    for c in &log.commands {
        monitor.register_command(c.clone());
    }
    let mut verdicts = Vec::with_capacity(log.records.len());
    let mut alerts = Vec::new();
    for (record, ensemble) in log.records.iter().zip(ensembles) {
        let phase = monitor.tracker.step(record);
        let verdict = monitor.finish(record, phase, ensemble);
        if let Some(a) = monitor.window.stream_step(&verdict) {
            alerts.push(a);
        }
        verdicts.push(verdict);
    }
    Ok(Detection { verdicts, alerts })
}
