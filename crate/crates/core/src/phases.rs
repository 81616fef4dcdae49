//! Mission-phase segmentation.
//!
//! Phases are inferred from log indicators because the autopilot only logs a
//! coarse flight mode. Transitions fire on the first record meeting each
//! condition and never regress:
//!
//! | phase            | entered when                                      |
//! |------------------|---------------------------------------------------|
//! | INITIALISATION   | mode is STABILISE                                 |
//! | TAKEOFF          | mode has left STABILISE                           |
//! | ON_MISSION       | `rel_alt >= takeoff_alt - alt_tol`                |
//! | RETURN_TO_ORIGIN | last waypoint reached (`wp_index`, else geometry) |
//! | LANDING          | within `pos_tol` of home                          |

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo;
use crate::telemetry::{FlightLog, LogRecord, MissionMeta, Mode};

#[derive(Debug, Error, PartialEq)]
pub enum PhaseError {
    #[error("log has no mission metadata (home, takeoff altitude, waypoints)")]
    MissingMetadata,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MissionPhase {
    Initialisation,
    Takeoff,
    OnMission,
    ReturnToOrigin,
    Landing,
}

impl MissionPhase {
    pub const ALL: [MissionPhase; 5] = [
        MissionPhase::Initialisation,
        MissionPhase::Takeoff,
        MissionPhase::OnMission,
        MissionPhase::ReturnToOrigin,
        MissionPhase::Landing,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MissionPhase::Initialisation => "INITIALISATION",
            MissionPhase::Takeoff => "TAKEOFF",
            MissionPhase::OnMission => "ON_MISSION",
            MissionPhase::ReturnToOrigin => "RETURN_TO_ORIGIN",
            MissionPhase::Landing => "LANDING",
        }
    }

    fn next(self) -> Option<MissionPhase> {
        match self {
            MissionPhase::Initialisation => Some(MissionPhase::Takeoff),
            MissionPhase::Takeoff => Some(MissionPhase::OnMission),
            MissionPhase::OnMission => Some(MissionPhase::ReturnToOrigin),
            MissionPhase::ReturnToOrigin => Some(MissionPhase::Landing),
            MissionPhase::Landing => None,
        }
    }
}

impl fmt::Display for MissionPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MissionPhase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MissionPhase::ALL
            .iter()
            .copied()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown phase `{s}`"))
    }
}

/// Tolerances for the geometric phase conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhaseConfig {
    pub alt_tol_m: f64,
    pub pos_tol_m: f64,
}

impl Default for PhaseConfig {
    fn default() -> Self {
        PhaseConfig {
            alt_tol_m: 0.5,
            pos_tol_m: 1.0,
        }
    }
}

/// Online phase state machine; [`segment`] is a fold of it over a log.
#[derive(Debug, Clone)]
pub struct PhaseTracker {
    meta: MissionMeta,
    config: PhaseConfig,
    current: MissionPhase,
}

impl PhaseTracker {
    pub fn new(meta: MissionMeta, config: PhaseConfig) -> Self {
        PhaseTracker {
            meta,
            config,
            current: MissionPhase::Initialisation,
        }
    }

    pub fn current(&self) -> MissionPhase {
        self.current
    }

    /// Advances on one record and returns the phase that record belongs to.
    pub fn step(&mut self, record: &LogRecord) -> MissionPhase {
        while let Some(next) = self.current.next() {
            if self.entered(next, record) {
                self.current = next;
            } else {
                break;
            }
        }
        self.current
    }

    fn entered(&self, phase: MissionPhase, r: &LogRecord) -> bool {
        let here = [r.lat, r.lon];
        match phase {
            MissionPhase::Initialisation => true,
            MissionPhase::Takeoff => r.mode != Mode::Stabilise,
            MissionPhase::OnMission => r.rel_alt >= self.meta.takeoff_alt_m - self.config.alt_tol_m,
            MissionPhase::ReturnToOrigin => {
                let n = self.meta.waypoints.len() as u32;
                if r.wp_index > 0 {
                    r.wp_index > n
                } else {
                    let last = self.meta.waypoints[self.meta.waypoints.len() - 1];
                    geo::distance_m(here, [last[0], last[1]]) <= self.config.pos_tol_m
                }
            }
            MissionPhase::Landing => {
                geo::distance_m(here, self.meta.home) <= self.config.pos_tol_m
            }
        }
    }
}

/// A log with one phase label per record.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseAnnotatedLog {
    pub log: FlightLog,
    pub phase_of: Vec<MissionPhase>,
}

impl PhaseAnnotatedLog {
    pub fn iter(&self) -> impl Iterator<Item = (&LogRecord, MissionPhase)> {
        self.log.records.iter().zip(self.phase_of.iter().copied())
    }
}

/// Labels every record of `log` with its mission phase.
pub fn segment(log: &FlightLog, config: PhaseConfig) -> Result<PhaseAnnotatedLog, PhaseError> {
    let meta = match &log.meta {
        Some(meta) if !meta.waypoints.is_empty() => meta.clone(),
        _ => return Err(PhaseError::MissingMetadata),
    };
    let mut tracker = PhaseTracker::new(meta, config);
    let phase_of = log.records.iter().map(|r| tracker.step(r)).collect();
    Ok(PhaseAnnotatedLog {
        log: log.clone(),
        phase_of,
    })
}

/// Record-index ranges per phase; together they partition `0..n` in phase order.
pub fn phase_slices(annotated: &PhaseAnnotatedLog) -> BTreeMap<MissionPhase, Range<usize>> {
    let mut out: BTreeMap<MissionPhase, Range<usize>> = BTreeMap::new();
    for (i, phase) in annotated.phase_of.iter().copied().enumerate() {
        out.entry(phase)
            .and_modify(|r| r.end = i + 1)
            .or_insert(i..i + 1);
    }
    out
}
