//! Range rules mined per mission phase, plus the command latency rule.

mod apriori;
mod mining;

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::phases::MissionPhase;
use crate::telemetry::{CommandEvent, Feature, LogRecord, Mode};

pub use apriori::{mine_frequent, FrequentItemset};
pub use mining::{
    derive_rules, discretize, mine_rules, DiscretizedCorpus, DroppedCandidate, MiningConfig,
    MiningReport, NearMiss, PhaseTransactions,
};

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("training corpus has no records")]
    EmptyCorpus,
    #[error("min_support must be in (0, 1], got {0}")]
    InvalidSupport(f64),
    #[error("invalid mining parameter: {0}")]
    InvalidParams(String),
    #[error("rule set document: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemKind {
    RangeBin { lower: f64, upper: f64 },
    Categorical { value: f64 },
}

impl ItemKind {
    fn key(&self) -> (u8, u64, u64) {
        let ord = |x: f64| {
            // order-preserving map of f64 onto u64
            let b = x.to_bits();
            if b >> 63 == 1 {
                !b
            } else {
                b | (1 << 63)
            }
        };
        match *self {
            ItemKind::RangeBin { lower, upper } => (0, ord(lower), ord(upper)),
            ItemKind::Categorical { value } => (1, ord(value), 0),
        }
    }
}

/// One discretized feature value.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Item {
    pub feature: Feature,
    pub kind: ItemKind,
}

impl Item {
    pub fn contains(&self, value: f64) -> bool {
        match self.kind {
            ItemKind::RangeBin { lower, upper } => lower <= value && value <= upper,
            ItemKind::Categorical { value: v } => v == value,
        }
    }
}

impl PartialEq for Item {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Item {}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.feature, self.kind.key()).cmp(&(other.feature, other.kind.key()))
    }
}

impl Hash for Item {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.feature.hash(state);
        self.kind.key().hash(state);
    }
}

impl fmt::Display for Item {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ItemKind::RangeBin { lower, upper } => {
                write!(f, "{} in [{lower:.4}, {upper:.4}]", self.feature)
            }
            ItemKind::Categorical { value } => write!(f, "{} = {value}", self.feature),
        }
    }
}

/// The discretized view of one record: at most one item per feature.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Transaction {
    pub items: Vec<Item>,
}

/// Where a rule applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scope {
    Universal,
    Phase(MissionPhase),
}

impl Scope {
    pub fn covers(self, phase: MissionPhase) -> bool {
        match self {
            Scope::Universal => true,
            Scope::Phase(p) => p == phase,
        }
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::Universal => f.write_str("UNIVERSAL"),
            Scope::Phase(p) => f.write_str(p.as_str()),
        }
    }
}

impl Serialize for Scope {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Scope {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        if s == "UNIVERSAL" {
            return Ok(Scope::Universal);
        }
        s.parse::<MissionPhase>()
            .map(Scope::Phase)
            .map_err(|_| serde::de::Error::custom(format!("unknown scope `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleSource {
    Mined,
    Domain,
}

/// `lower <= feature <= upper` within `scope`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeRule {
    pub feature: Feature,
    pub scope: Scope,
    pub lower: f64,
    pub upper: f64,
    pub holding_fraction: f64,
    pub support: f64,
    pub source: RuleSource,
    /// Bounds were stretched to absorb a near-miss minority.
    #[serde(default)]
    pub widened: bool,
    pub description: String,
}

impl RangeRule {
    pub fn holds(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }

    pub fn bound_text(&self) -> String {
        if self.lower == self.upper {
            format!("== {}", value_text(self.feature, self.lower))
        } else {
            format!(
                "in [{}, {}]",
                value_text(self.feature, self.lower),
                value_text(self.feature, self.upper)
            )
        }
    }
}

fn unit(feature: Feature) -> &'static str {
    match feature {
        Feature::RelAlt => " m",
        Feature::Roll | Feature::Pitch | Feature::Yaw => " rad",
        Feature::Throttle => " %",
        Feature::Groundspeed | Feature::Climb => " m/s",
        Feature::Lat | Feature::Lon => " deg",
        _ => "",
    }
}

/// Renders a feature value for humans, naming modes rather than their codes.
pub fn value_text(feature: Feature, v: f64) -> String {
    if feature == Feature::Mode {
        if let Some(m) = Mode::from_code(v) {
            return m.to_string();
        }
    }
    if feature.is_categorical() {
        format!("{v}")
    } else {
        format!("{v:.4}{}", unit(feature))
    }
}

pub(crate) fn describe(feature: Feature, scope: Scope, lower: f64, upper: f64) -> String {
    let when = match scope {
        Scope::Universal => "In every phase".to_string(),
        Scope::Phase(p) => format!("During {p}"),
    };
    if lower == upper {
        format!("{when}, {feature} equals {}.", value_text(feature, lower))
    } else {
        format!(
            "{when}, {feature} stays between {} and {}.",
            value_text(feature, lower),
            value_text(feature, upper)
        )
    }
}

/// Commands must be enacted within `max_latency_ms` of being issued.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyRule {
    pub max_latency_ms: i64,
}

impl Default for LatencyRule {
    fn default() -> Self {
        LatencyRule {
            max_latency_ms: 2000,
        }
    }
}

impl LatencyRule {
    pub fn description(&self) -> String {
        format!(
            "Every command is enacted within {} ms of being issued.",
            self.max_latency_ms
        )
    }
}

/// A mined rule collection with the parameters that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSet {
    pub min_support: f64,
    pub holding_threshold: f64,
    pub rules: Vec<RangeRule>,
    pub latency_rule: Option<LatencyRule>,
    /// Identifiers of the training logs.
    #[serde(default)]
    pub provenance: Vec<String>,
}

impl RuleSet {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("rule sets always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, RuleError> {
        let set: RuleSet = serde_json::from_str(text)?;
        for r in &set.rules {
            if r.lower.is_nan() || r.upper.is_nan() || r.lower > r.upper {
                return Err(RuleError::InvalidParams(format!(
                    "rule on {} has lower {} above upper {}",
                    r.feature, r.lower, r.upper
                )));
            }
        }
        if let Some(l) = set.latency_rule {
            if l.max_latency_ms <= 0 {
                return Err(RuleError::InvalidParams("max_latency_ms must be positive".into()));
            }
        }
        Ok(set)
    }

    /// Rules that apply during `phase`.
    pub fn rules_for(&self, phase: MissionPhase) -> impl Iterator<Item = &RangeRule> {
        self.rules.iter().filter(move |r| r.scope.covers(phase))
    }

    /// One violation per applicable rule that `record` breaks.
    pub fn check_record(
        &self,
        index: usize,
        record: &LogRecord,
        phase: MissionPhase,
    ) -> Vec<Violation> {
        self.rules_for(phase)
            .filter_map(|rule| {
                let v = record.get(rule.feature);
                (!rule.holds(v)).then(|| Violation {
                    subject: Subject::Record(index),
                    kind: ViolationKind::Range,
                    rule: rule.description.clone(),
                    feature: Some(rule.feature),
                    phase: Some(phase),
                    observed: v,
                    expected: rule.bound_text(),
                })
            })
            .collect()
    }
}

/// Free-function form of [`RuleSet::check_record`].
pub fn check_record(
    rules: &RuleSet,
    index: usize,
    record: &LogRecord,
    phase: MissionPhase,
) -> Vec<Violation> {
    rules.check_record(index, record, phase)
}

/// Latency violations among `commands` as of `now_ms`. An enacted command is
/// late when `enact - issue > max`; an unacknowledged one is reported as lost
/// once `now - issue > max`.
pub fn check_latency(rule: &LatencyRule, commands: &[CommandEvent], now_ms: i64) -> Vec<Violation> {
    commands
        .iter()
        .filter_map(|c| {
            let (kind, latency) = match c.enact_ms {
                Some(e) => (ViolationKind::Latency, e - c.issue_ms),
                None => (ViolationKind::LostCommand, now_ms - c.issue_ms),
            };
            (latency > rule.max_latency_ms).then(|| Violation {
                subject: Subject::Command(c.cmd_id),
                kind,
                rule: rule.description(),
                feature: None,
                phase: None,
                observed: latency as f64,
                expected: format!("<= {} ms", rule.max_latency_ms),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subject {
    Record(usize),
    Command(i64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Range,
    Latency,
    LostCommand,
}

/// A broken rule, with what was seen and what was expected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub subject: Subject,
    pub kind: ViolationKind,
    pub rule: String,
    pub feature: Option<Feature>,
    pub phase: Option<MissionPhase>,
    pub observed: f64,
    pub expected: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.kind, self.subject) {
            (ViolationKind::Range, _) => {
                let feature = self.feature.expect("range violations name a feature");
                let phase = self.phase.map(|p| p.as_str()).unwrap_or("?");
                write!(
                    f,
                    "{phase}: {feature} = {} violates `{}` (expected {})",
                    value_text(feature, self.observed),
                    self.rule,
                    self.expected
                )
            }
            (ViolationKind::Latency, _) => write!(
                f,
                "command {}: latency {} ms exceeds {}",
                subject_id(self.subject),
                self.observed,
                self.expected
            ),
            _ => write!(
                f,
                "command {}: not enacted after {} ms (lost command, expected {})",
                subject_id(self.subject),
                self.observed,
                self.expected
            ),
        }
    }
}

fn subject_id(s: Subject) -> i64 {
    match s {
        Subject::Command(id) => id,
        Subject::Record(i) => i as i64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record() -> LogRecord {
        LogRecord {
            timestamp_ms: 0,
            mode: Mode::Auto,
            lat: 0.0,
            lon: 0.0,
            rel_alt: 20.0,
            roll: 0.0,
            pitch: 0.0,
            yaw: 0.0,
            throttle: 40.0,
            groundspeed: 5.0,
            climb: 0.0,
            baro_status: 1,
            gps_fix: 3,
            wp_index: 1,
        }
    }

    fn rule(feature: Feature, scope: Scope, lower: f64, upper: f64) -> RangeRule {
        RangeRule {
            feature,
            scope,
            lower,
            upper,
            holding_fraction: 1.0,
            support: 1.0,
            source: RuleSource::Mined,
            widened: false,
            description: describe(feature, scope, lower, upper),
        }
    }

    fn set(rules: Vec<RangeRule>) -> RuleSet {
        RuleSet {
            min_support: 0.01,
            holding_threshold: 0.99,
            rules,
            latency_rule: Some(LatencyRule::default()),
            provenance: vec![],
        }
    }

    #[test]
    fn stuck_roll_breaks_phase_rule() {
        let rules = set(vec![rule(
            Feature::Roll,
            Scope::Phase(MissionPhase::OnMission),
            -0.3,
            0.3,
        )]);
        let mut r = record();
        r.roll = std::f64::consts::PI;
        let v = rules.check_record(7, &r, MissionPhase::OnMission);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].subject, Subject::Record(7));
        let text = v[0].to_string();
        assert!(text.contains("ON_MISSION") && text.contains("roll") && text.contains("3.1416"));
        assert!(rules
            .check_record(7, &r, MissionPhase::Takeoff)
            .is_empty());
        assert!(rules
            .check_record(7, &record(), MissionPhase::OnMission)
            .is_empty());
    }

    #[test]
    fn broken_barometer_breaks_universal_rule() {
        let rules = set(vec![rule(Feature::BaroStatus, Scope::Universal, 1.0, 1.0)]);
        let mut r = record();
        r.baro_status = 0;
        for phase in MissionPhase::ALL {
            assert_eq!(rules.check_record(0, &r, phase).len(), 1);
        }
        assert_eq!(
            rules.rules[0].description,
            "In every phase, baro_status equals 1."
        );
    }

    #[test]
    fn latency_examples() {
        let rule = LatencyRule::default();
        let cmd = |enact| CommandEvent {
            cmd_id: 1,
            issue_ms: 1000,
            enact_ms: enact,
        };
        let v = check_latency(&rule, &[cmd(Some(3500))], 3500);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::Latency);
        assert_eq!(v[0].observed, 2500.0);
        assert!(check_latency(&rule, &[cmd(Some(2500))], 9000).is_empty());
        let v = check_latency(&rule, &[cmd(None)], 3200);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::LostCommand);
        assert!(check_latency(&rule, &[cmd(None)], 3000).is_empty());
        assert!(v[0].to_string().contains("lost command"));
    }

    #[test]
    fn json_shape() {
        let rules = set(vec![rule(
            Feature::Mode,
            Scope::Phase(MissionPhase::Takeoff),
            1.0,
            1.0,
        )]);
        let text = rules.to_json();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["rules"][0]["scope"], "TAKEOFF");
        assert_eq!(v["rules"][0]["feature"], "mode");
        assert_eq!(v["rules"][0]["source"], "mined");
        assert_eq!(v["latency_rule"]["max_latency_ms"], 2000);
        assert_eq!(
            v["rules"][0]["description"],
            "During TAKEOFF, mode equals AUTO."
        );
        assert_eq!(RuleSet::from_json(&text).unwrap(), rules);
    }

    #[test]
    fn item_order_is_total() {
        let a = Item {
            feature: Feature::Roll,
            kind: ItemKind::RangeBin {
                lower: -1.0,
                upper: -0.5,
            },
        };
        let b = Item {
            feature: Feature::Roll,
            kind: ItemKind::RangeBin {
                lower: -0.5,
                upper: 0.0,
            },
        };
        assert!(a < b);
        assert!(a.contains(-0.75) && !a.contains(0.1));
    }
}
