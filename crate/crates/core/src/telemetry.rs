//! Flight-log data model and its text formats.
//!
//! A log document is the telemetry CSV (fixed column order), optionally
//! preceded by a `#meta <json>` line carrying the mission descriptor and
//! followed by a `#commands` section holding command events:
//!
//! ```text
//! #meta {"home":[1.3,103.8],"takeoff_alt_m":20.0,"waypoints":[[1.3,103.8,20.0]]}
//! timestamp_ms,mode,lat,lon,rel_alt,roll,pitch,yaw,throttle,groundspeed,climb,baro_status,gps_fix,wp_index
//! 0,STABILISE,1.3,103.8,0,0.001,-0.002,0.01,0,0.02,0,1,3,0
//! #commands
//! cmd_id,issue_ms,enact_ms
//! 1,1000,1450
//! 2,5000,
//! ```

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Column order of the telemetry CSV.
pub const LOG_COLUMNS: [&str; 14] = [
    "timestamp_ms",
    "mode",
    "lat",
    "lon",
    "rel_alt",
    "roll",
    "pitch",
    "yaw",
    "throttle",
    "groundspeed",
    "climb",
    "baro_status",
    "gps_fix",
    "wp_index",
];

/// Column order of the command CSV.
pub const COMMAND_COLUMNS: [&str; 3] = ["cmd_id", "issue_ms", "enact_ms"];

pub const META_PREFIX: &str = "#meta ";
pub const COMMANDS_MARKER: &str = "#commands";

#[derive(Debug, Error, PartialEq)]
pub enum TelemetryError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("line {line}: `{field}` = {value} is outside its valid range")]
    ValueOutOfRange {
        line: usize,
        field: &'static str,
        value: f64,
    },
    #[error("line {line}: timestamp {ts} does not follow {prev}")]
    NonMonotoneTimestamps { line: usize, prev: i64, ts: i64 },
    #[error("line {line}: unknown mode `{mode}`")]
    UnknownMode { line: usize, mode: String },
    #[error("line {line}: `{field}` has unparsable value `{raw}`")]
    InvalidNumber {
        line: usize,
        field: &'static str,
        raw: String,
    },
    #[error("line {line}: expected {expected} fields, found {found}")]
    MalformedRow {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("command {cmd_id}: enacted at {enact_ms} before being issued at {issue_ms}")]
    CommandOrder {
        cmd_id: i64,
        issue_ms: i64,
        enact_ms: i64,
    },
    #[error("invalid mission metadata: {0}")]
    InvalidMeta(String),
}

/// Autopilot flight mode as logged by the flight controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "STABILISE")]
    Stabilise,
    #[serde(rename = "AUTO")]
    Auto,
    #[serde(rename = "RTL")]
    Rtl,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Stabilise => "STABILISE",
            Mode::Auto => "AUTO",
            Mode::Rtl => "RTL",
        }
    }

    /// Numeric code used when a mode participates in range rules.
    pub fn code(self) -> f64 {
        match self {
            Mode::Stabilise => 0.0,
            Mode::Auto => 1.0,
            Mode::Rtl => 2.0,
        }
    }

    pub fn from_code(code: f64) -> Option<Mode> {
        match code as i64 {
            0 if code == 0.0 => Some(Mode::Stabilise),
            1 if code == 1.0 => Some(Mode::Auto),
            2 if code == 2.0 => Some(Mode::Rtl),
            _ => None,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "STABILISE" => Ok(Mode::Stabilise),
            "AUTO" => Ok(Mode::Auto),
            "RTL" => Ok(Mode::Rtl),
            other => Err(other.to_string()),
        }
    }
}

/// A loggable column that rules, detectors and fault injection can address by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    Mode,
    Lat,
    Lon,
    RelAlt,
    Roll,
    Pitch,
    Yaw,
    Throttle,
    Groundspeed,
    Climb,
    BaroStatus,
    GpsFix,
    WpIndex,
}

impl Feature {
    pub const ALL: [Feature; 13] = [
        Feature::Mode,
        Feature::Lat,
        Feature::Lon,
        Feature::RelAlt,
        Feature::Roll,
        Feature::Pitch,
        Feature::Yaw,
        Feature::Throttle,
        Feature::Groundspeed,
        Feature::Climb,
        Feature::BaroStatus,
        Feature::GpsFix,
        Feature::WpIndex,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Feature::Mode => "mode",
            Feature::Lat => "lat",
            Feature::Lon => "lon",
            Feature::RelAlt => "rel_alt",
            Feature::Roll => "roll",
            Feature::Pitch => "pitch",
            Feature::Yaw => "yaw",
            Feature::Throttle => "throttle",
            Feature::Groundspeed => "groundspeed",
            Feature::Climb => "climb",
            Feature::BaroStatus => "baro_status",
            Feature::GpsFix => "gps_fix",
            Feature::WpIndex => "wp_index",
        }
    }

    /// Categorical columns take a small set of discrete values.
    pub fn is_categorical(self) -> bool {
        matches!(
            self,
            Feature::Mode | Feature::BaroStatus | Feature::GpsFix | Feature::WpIndex
        )
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Feature {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Feature::ALL
            .iter()
            .copied()
            .find(|f| f.name() == s)
            .ok_or_else(|| format!("unknown feature `{s}`"))
    }
}

/// One telemetry row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub timestamp_ms: i64,
    pub mode: Mode,
    pub lat: f64,
    pub lon: f64,
    /// Meters above home.
    pub rel_alt: f64,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    /// Percent, 0..=100.
    pub throttle: f64,
    pub groundspeed: f64,
    pub climb: f64,
    pub baro_status: u8,
    pub gps_fix: u32,
    /// Current target waypoint (1-based); 0 before the mission legs start.
    pub wp_index: u32,
}

impl LogRecord {
    pub fn get(&self, feature: Feature) -> f64 {
        match feature {
            Feature::Mode => self.mode.code(),
            Feature::Lat => self.lat,
            Feature::Lon => self.lon,
            Feature::RelAlt => self.rel_alt,
            Feature::Roll => self.roll,
            Feature::Pitch => self.pitch,
            Feature::Yaw => self.yaw,
            Feature::Throttle => self.throttle,
            Feature::Groundspeed => self.groundspeed,
            Feature::Climb => self.climb,
            Feature::BaroStatus => f64::from(self.baro_status),
            Feature::GpsFix => f64::from(self.gps_fix),
            Feature::WpIndex => f64::from(self.wp_index),
        }
    }

    /// Overwrites a column. Categorical values are truncated to their integer code.
    pub fn set(&mut self, feature: Feature, value: f64) {
        match feature {
            Feature::Mode => {
                if let Some(mode) = Mode::from_code(value) {
                    self.mode = mode;
                }
            }
            Feature::Lat => self.lat = value,
            Feature::Lon => self.lon = value,
            Feature::RelAlt => self.rel_alt = value,
            Feature::Roll => self.roll = value,
            Feature::Pitch => self.pitch = value,
            Feature::Yaw => self.yaw = value,
            Feature::Throttle => self.throttle = value,
            Feature::Groundspeed => self.groundspeed = value,
            Feature::Climb => self.climb = value,
            Feature::BaroStatus => self.baro_status = value as u8,
            Feature::GpsFix => self.gps_fix = value as u32,
            Feature::WpIndex => self.wp_index = value as u32,
        }
    }

    /// Checks the per-field bounds, returning the first offending field.
    pub fn validate(&self) -> Result<(), (&'static str, f64)> {
        let checks: [(&'static str, f64, bool); 9] = [
            ("lat", self.lat, self.lat.abs() <= 90.0),
            ("lon", self.lon, self.lon.abs() <= 180.0),
            ("rel_alt", self.rel_alt, self.rel_alt.is_finite()),
            ("roll", self.roll, self.roll.abs() <= PI),
            ("pitch", self.pitch, self.pitch.abs() <= PI),
            ("yaw", self.yaw, self.yaw.abs() <= PI),
            (
                "throttle",
                self.throttle,
                (0.0..=100.0).contains(&self.throttle),
            ),
            (
                "groundspeed",
                self.groundspeed,
                self.groundspeed >= 0.0 && self.groundspeed.is_finite(),
            ),
            ("climb", self.climb, self.climb.is_finite()),
        ];
        for (name, value, ok) in checks {
            // NaN fails every comparison above, so it lands here too.
            if !ok {
                return Err((name, value));
            }
        }
        if self.baro_status > 1 {
            return Err(("baro_status", f64::from(self.baro_status)));
        }
        Ok(())
    }
}

/// A command sent from the ground station and, possibly, acted upon.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandEvent {
    pub cmd_id: i64,
    pub issue_ms: i64,
    /// `None` when the drone never acknowledged the command.
    pub enact_ms: Option<i64>,
}

/// Mission descriptor that travels with a log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionMeta {
    /// `[lat, lon]` of the launch point.
    pub home: [f64; 2],
    pub takeoff_alt_m: f64,
    /// `[lat, lon, alt_m]` triples in flight order.
    pub waypoints: Vec<[f64; 3]>,
}

impl MissionMeta {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("mission metadata is always serializable")
    }

    pub fn from_json(text: &str) -> Result<Self, TelemetryError> {
        let meta: MissionMeta =
            serde_json::from_str(text).map_err(|e| TelemetryError::InvalidMeta(e.to_string()))?;
        if meta.waypoints.is_empty() {
            return Err(TelemetryError::InvalidMeta(
                "waypoint list is empty".to_string(),
            ));
        }
        Ok(meta)
    }
}

/// A validated flight log. Immutable once built through [`FlightLog::new`] or [`parse_log`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlightLog {
    pub records: Vec<LogRecord>,
    pub commands: Vec<CommandEvent>,
    pub meta: Option<MissionMeta>,
}

impl FlightLog {
    pub fn new(
        records: Vec<LogRecord>,
        commands: Vec<CommandEvent>,
        meta: Option<MissionMeta>,
    ) -> Result<Self, TelemetryError> {
        for (i, r) in records.iter().enumerate() {
            r.validate()
                .map_err(|(field, value)| TelemetryError::ValueOutOfRange {
                    line: i + 2,
                    field,
                    value,
                })?;
            if i > 0 && records[i - 1].timestamp_ms >= r.timestamp_ms {
                return Err(TelemetryError::NonMonotoneTimestamps {
                    line: i + 2,
                    prev: records[i - 1].timestamp_ms,
                    ts: r.timestamp_ms,
                });
            }
        }
        for c in &commands {
            validate_command(c)?;
        }
        Ok(FlightLog {
            records,
            commands,
            meta,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

fn validate_command(c: &CommandEvent) -> Result<(), TelemetryError> {
    match c.enact_ms {
        Some(enact_ms) if enact_ms < c.issue_ms => Err(TelemetryError::CommandOrder {
            cmd_id: c.cmd_id,
            issue_ms: c.issue_ms,
            enact_ms,
        }),
        _ => Ok(()),
    }
}

/// Header line of the telemetry CSV.
pub fn log_header() -> String {
    LOG_COLUMNS.join(",")
}

/// Checks a telemetry header line against [`LOG_COLUMNS`].
pub fn check_header(line: &str) -> Result<(), TelemetryError> {
    let got: Vec<&str> = line.trim().split(',').map(str::trim).collect();
    for (i, expected) in LOG_COLUMNS.iter().enumerate() {
        if got.get(i) != Some(expected) {
            return Err(TelemetryError::MissingColumn(expected.to_string()));
        }
    }
    if got.len() > LOG_COLUMNS.len() {
        return Err(TelemetryError::MalformedRow {
            line: 1,
            expected: LOG_COLUMNS.len(),
            found: got.len(),
        });
    }
    Ok(())
}

fn parse_num<T: FromStr>(raw: &str, field: &'static str, line: usize) -> Result<T, TelemetryError> {
    raw.trim()
        .parse::<T>()
        .map_err(|_| TelemetryError::InvalidNumber {
            line,
            field,
            raw: raw.to_string(),
        })
}

/// Parses and validates one telemetry data row. `line` is used for error reporting only.
pub fn parse_record_line(text: &str, line: usize) -> Result<LogRecord, TelemetryError> {
    let fields: Vec<&str> = text.trim_end_matches(['\r', '\n']).split(',').collect();
    if fields.len() != LOG_COLUMNS.len() {
        return Err(TelemetryError::MalformedRow {
            line,
            expected: LOG_COLUMNS.len(),
            found: fields.len(),
        });
    }
    let mode = fields[1]
        .trim()
        .parse::<Mode>()
        .map_err(|mode| TelemetryError::UnknownMode { line, mode })?;
    let record = LogRecord {
        timestamp_ms: parse_num(fields[0], "timestamp_ms", line)?,
        mode,
        lat: parse_num(fields[2], "lat", line)?,
        lon: parse_num(fields[3], "lon", line)?,
        rel_alt: parse_num(fields[4], "rel_alt", line)?,
        roll: parse_num(fields[5], "roll", line)?,
        pitch: parse_num(fields[6], "pitch", line)?,
        yaw: parse_num(fields[7], "yaw", line)?,
        throttle: parse_num(fields[8], "throttle", line)?,
        groundspeed: parse_num(fields[9], "groundspeed", line)?,
        climb: parse_num(fields[10], "climb", line)?,
        baro_status: parse_num(fields[11], "baro_status", line)?,
        gps_fix: parse_num(fields[12], "gps_fix", line)?,
        wp_index: parse_num(fields[13], "wp_index", line)?,
    };
    record
        .validate()
        .map_err(|(field, value)| TelemetryError::ValueOutOfRange { line, field, value })?;
    Ok(record)
}

/// Formats one telemetry row. Floats use the shortest representation that round-trips.
pub fn format_record(r: &LogRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        r.timestamp_ms,
        r.mode,
        r.lat,
        r.lon,
        r.rel_alt,
        r.roll,
        r.pitch,
        r.yaw,
        r.throttle,
        r.groundspeed,
        r.climb,
        r.baro_status,
        r.gps_fix,
        r.wp_index
    )
}

fn parse_command_line(text: &str, line: usize) -> Result<CommandEvent, TelemetryError> {
    let fields: Vec<&str> = text.trim_end_matches(['\r', '\n']).split(',').collect();
    if fields.len() != COMMAND_COLUMNS.len() {
        return Err(TelemetryError::MalformedRow {
            line,
            expected: COMMAND_COLUMNS.len(),
            found: fields.len(),
        });
    }
    let enact_ms = if fields[2].trim().is_empty() {
        None
    } else {
        Some(parse_num(fields[2], "enact_ms", line)?)
    };
    let cmd = CommandEvent {
        cmd_id: parse_num(fields[0], "cmd_id", line)?,
        issue_ms: parse_num(fields[1], "issue_ms", line)?,
        enact_ms,
    };
    validate_command(&cmd)?;
    Ok(cmd)
}

fn check_command_header(line: &str) -> Result<(), TelemetryError> {
    let got: Vec<&str> = line.trim().split(',').map(str::trim).collect();
    for (i, expected) in COMMAND_COLUMNS.iter().enumerate() {
        if got.get(i) != Some(expected) {
            return Err(TelemetryError::MissingColumn(expected.to_string()));
        }
    }
    Ok(())
}

/// Parses a standalone command CSV (`cmd_id,issue_ms,enact_ms`).
pub fn parse_commands(text: &str) -> Result<Vec<CommandEvent>, TelemetryError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((_, header)) = lines.next() else {
        return Ok(Vec::new());
    };
    check_command_header(header)?;
    lines.map(|(i, l)| parse_command_line(l, i + 1)).collect()
}

/// Formats commands as a standalone command CSV.
pub fn write_commands(commands: &[CommandEvent]) -> String {
    let mut out = COMMAND_COLUMNS.join(",");
    out.push('\n');
    for c in commands {
        let enact = c.enact_ms.map(|e| e.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{}\n", c.cmd_id, c.issue_ms, enact));
    }
    out
}

/// Parses a log document: optional `#meta` line, telemetry CSV, optional `#commands` section.
pub fn parse_log(text: &str) -> Result<FlightLog, TelemetryError> {
    let mut meta = None;
    let mut records: Vec<LogRecord> = Vec::new();
    let mut header_seen = false;
    let mut lines = text.lines().enumerate().peekable();

    while let Some((i, raw)) = lines.next() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(json) = line.strip_prefix(META_PREFIX) {
            meta = Some(MissionMeta::from_json(json)?);
            continue;
        }
        if line == COMMANDS_MARKER {
            if !header_seen {
                return Err(TelemetryError::MissingColumn(LOG_COLUMNS[0].to_string()));
            }
            let rest: Vec<&str> = lines.by_ref().map(|(_, l)| l).collect();
            let commands = parse_commands(&rest.join("\n"))?;
            return Ok(FlightLog {
                records,
                commands,
                meta,
            });
        }
        if !header_seen {
            check_header(line)?;
            header_seen = true;
            continue;
        }
        let record = parse_record_line(line, line_no)?;
        if let Some(prev) = records.last() {
            if prev.timestamp_ms >= record.timestamp_ms {
                return Err(TelemetryError::NonMonotoneTimestamps {
                    line: line_no,
                    prev: prev.timestamp_ms,
                    ts: record.timestamp_ms,
                });
            }
        }
        records.push(record);
    }
    if !header_seen {
        return Err(TelemetryError::MissingColumn(LOG_COLUMNS[0].to_string()));
    }
    Ok(FlightLog {
        records,
        commands: Vec::new(),
        meta,
    })
}

/// Serializes a log document; `parse_log(&write_log(l)) == l` for every valid log.
pub fn write_log(log: &FlightLog) -> String {
    let mut out = String::new();
    if let Some(meta) = &log.meta {
        out.push_str(META_PREFIX);
        out.push_str(&meta.to_json());
        out.push('\n');
    }
    out.push_str(&log_header());
    out.push('\n');
    for r in &log.records {
        out.push_str(&format_record(r));
        out.push('\n');
    }
    if !log.commands.is_empty() {
        out.push_str(COMMANDS_MARKER);
        out.push('\n');
        out.push_str(&write_commands(&log.commands));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(ts: i64, roll: f64) -> String {
        format!("{ts},AUTO,1.3521,103.8198,10.5,{roll},-0.02,0.5,48.2,4.9,0.1,1,3,2")
    }

    fn doc(rows: &[String]) -> String {
        let mut s = log_header();
        for r in rows {
            s.push('\n');
            s.push_str(r);
        }
        s
    }

    #[test]
    fn parses_two_rows() {
        let log = parse_log(&doc(&[row(100, 0.01), row(200, -0.01)])).unwrap();
        assert_eq!(log.len(), 2);
        assert!(log.records[0].timestamp_ms < log.records[1].timestamp_ms);
        assert_eq!(log.records[1].roll, -0.01);
        assert_eq!(log.records[0].mode, Mode::Auto);
    }

    #[test]
    fn roll_beyond_pi_is_out_of_range() {
        let err = parse_log(&doc(&[row(100, 4.0)])).unwrap_err();
        assert!(matches!(
            err,
            TelemetryError::ValueOutOfRange { field: "roll", .. }
        ));
    }

    #[test]
    fn roll_exactly_pi_is_accepted() {
        let log = parse_log(&doc(&[row(100, PI)])).unwrap();
        assert_eq!(log.records[0].roll, PI);
    }

    #[test]
    fn repeated_timestamp_rejected() {
        let err = parse_log(&doc(&[row(100, 0.0), row(100, 0.0)])).unwrap_err();
        assert_eq!(
            err,
            TelemetryError::NonMonotoneTimestamps {
                line: 3,
                prev: 100,
                ts: 100
            }
        );
    }

    #[test]
    fn unknown_mode_and_missing_column() {
        let bad_mode = doc(&["0,LOITER,1.3,103.8,0,0,0,0,0,0,0,1,3,0".to_string()]);
        assert!(matches!(
            parse_log(&bad_mode).unwrap_err(),
            TelemetryError::UnknownMode { .. }
        ));
        let header = "timestamp_ms,mode,lat,lon,rel_alt,roll,pitch,yaw,throttle,groundspeed,climb,baro_status,gps_fix";
        assert_eq!(
            parse_log(header).unwrap_err(),
            TelemetryError::MissingColumn("wp_index".into())
        );
        assert_eq!(
            parse_log("").unwrap_err(),
            TelemetryError::MissingColumn("timestamp_ms".into())
        );
    }

    #[test]
    fn bad_numbers_and_row_shape() {
        let text = doc(&["0,AUTO,abc,103.8,0,0,0,0,0,0,0,1,3,0".to_string()]);
        assert!(matches!(
            parse_log(&text).unwrap_err(),
            TelemetryError::InvalidNumber { field: "lat", .. }
        ));
        let text = doc(&["0,AUTO,1.3".to_string()]);
        assert!(matches!(
            parse_log(&text).unwrap_err(),
            TelemetryError::MalformedRow { found: 3, .. }
        ));
        let text = doc(&["0,AUTO,1.3,103.8,0,0,0,0,0,0,0,2,3,0".to_string()]);
        assert!(matches!(
            parse_log(&text).unwrap_err(),
            TelemetryError::ValueOutOfRange {
                field: "baro_status",
                ..
            }
        ));
        let text = doc(&["0,AUTO,1.3,103.8,0,0,0,0,100.5,0,0,1,3,0".to_string()]);
        assert!(matches!(
            parse_log(&text).unwrap_err(),
            TelemetryError::ValueOutOfRange {
                field: "throttle",
                ..
            }
        ));
    }

    #[test]
    fn empty_log_is_header_only() {
        let log = FlightLog::new(vec![], vec![], None).unwrap();
        let text = write_log(&log);
        assert_eq!(text.trim_end(), log_header());
        assert_eq!(parse_log(&text).unwrap(), log);
    }

    #[test]
    fn commands_and_meta_round_trip() {
        let mut log = parse_log(&doc(&[row(100, 0.01), row(1100, 0.02)])).unwrap();
        log.commands = vec![
            CommandEvent {
                cmd_id: 1,
                issue_ms: 100,
                enact_ms: Some(900),
            },
            CommandEvent {
                cmd_id: 2,
                issue_ms: 500,
                enact_ms: None,
            },
        ];
        log.meta = Some(MissionMeta {
            home: [1.3521, 103.8198],
            takeoff_alt_m: 20.0,
            waypoints: vec![[1.353, 103.82, 20.0]],
        });
        let text = write_log(&log);
        assert!(text.contains("#commands\ncmd_id,issue_ms,enact_ms\n1,100,900\n2,500,\n"));
        assert_eq!(parse_log(&text).unwrap(), log);
    }

    #[test]
    fn command_enacted_before_issue_rejected() {
        let err = parse_commands("cmd_id,issue_ms,enact_ms\n7,1000,900").unwrap_err();
        assert!(matches!(err, TelemetryError::CommandOrder { cmd_id: 7, .. }));
    }

    #[test]
    fn meta_requires_waypoints() {
        let err = MissionMeta::from_json(r#"{"home":[1.0,2.0],"takeoff_alt_m":10.0,"waypoints":[]}"#)
            .unwrap_err();
        assert!(matches!(err, TelemetryError::InvalidMeta(_)));
    }

    #[test]
    fn feature_names_round_trip() {
        for f in Feature::ALL {
            assert_eq!(f.name().parse::<Feature>().unwrap(), f);
        }
    }
}
