use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::telemetry::Feature;

/// A fault injected into a simulated mission.
///
/// Intervals are half-open, `[start_ms, end_ms)`. Wind direction is the
/// compass bearing (radians, clockwise from north) the wind blows towards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FaultSpec {
    Wind {
        speed_mps: f64,
        direction_rad: f64,
        start_ms: i64,
        end_ms: i64,
    },
    ActuatorCapacity {
        factor: f64,
        start_ms: i64,
        end_ms: i64,
    },
    SensorStuck {
        feature: Feature,
        stuck_value: f64,
        start_ms: i64,
        end_ms: i64,
    },
    /// Motors stop at `at_ms` and stay off.
    EngineCutoff { at_ms: i64 },
}

impl FaultSpec {
    /// `[start, end)` of the fault; an engine cutoff never ends.
    pub fn interval(&self) -> (i64, i64) {
        match *self {
            FaultSpec::Wind {
                start_ms, end_ms, ..
            }
            | FaultSpec::ActuatorCapacity {
                start_ms, end_ms, ..
            }
            | FaultSpec::SensorStuck {
                start_ms, end_ms, ..
            } => (start_ms, end_ms),
            FaultSpec::EngineCutoff { at_ms } => (at_ms, i64::MAX),
        }
    }

    pub fn active_at(&self, t_ms: i64) -> bool {
        let (start, end) = self.interval();
        start <= t_ms && t_ms < end
    }

    pub(crate) fn validate(&self) -> Result<(), String> {
        let (start, end) = self.interval();
        if start < 0 {
            return Err(format!("fault starts before the mission: {start} ms"));
        }
        if start >= end {
            return Err(format!("empty fault interval [{start}, {end})"));
        }
        match *self {
            FaultSpec::Wind {
                speed_mps,
                direction_rad,
                ..
            } => {
                if !(speed_mps >= 0.0 && speed_mps.is_finite() && direction_rad.is_finite()) {
                    return Err(format!("invalid wind speed {speed_mps} or direction"));
                }
            }
            FaultSpec::ActuatorCapacity { factor, .. } => {
                if !(factor > 0.0 && factor <= 1.0) {
                    return Err(format!("actuator factor {factor} outside (0, 1]"));
                }
            }
            FaultSpec::SensorStuck {
                feature,
                stuck_value,
                ..
            } => stuck_value_ok(feature, stuck_value)?,
            FaultSpec::EngineCutoff { .. } => {}
        }
        Ok(())
    }
}

fn stuck_value_ok(feature: Feature, v: f64) -> Result<(), String> {
    let ok = match feature {
        Feature::Roll | Feature::Pitch | Feature::Yaw => v.abs() <= PI,
        Feature::Throttle => (0.0..=100.0).contains(&v),
        Feature::BaroStatus => v == 0.0 || v == 1.0,
        Feature::Groundspeed => v >= 0.0 && v.is_finite(),
        Feature::Lat => v.abs() <= 90.0,
        Feature::Lon => v.abs() <= 180.0,
        Feature::GpsFix | Feature::WpIndex => v >= 0.0 && v.fract() == 0.0,
        Feature::RelAlt | Feature::Climb => v.is_finite(),
        Feature::Mode => false,
    };
    if ok {
        Ok(())
    } else {
        Err(format!("cannot stick `{feature}` at {v}"))
    }
}

impl fmt::Display for FaultSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FaultSpec::Wind {
                speed_mps,
                direction_rad,
                start_ms,
                end_ms,
            } => write!(
                f,
                "wind:speed={speed_mps},dir={direction_rad},start={start_ms},end={end_ms}"
            ),
            FaultSpec::ActuatorCapacity {
                factor,
                start_ms,
                end_ms,
            } => write!(f, "actuator:factor={factor},start={start_ms},end={end_ms}"),
            FaultSpec::SensorStuck {
                feature,
                stuck_value,
                start_ms,
                end_ms,
            } => write!(
                f,
                "sensor_stuck:feature={feature},value={stuck_value},start={start_ms},end={end_ms}"
            ),
            FaultSpec::EngineCutoff { at_ms } => write!(f, "engine_cutoff:at={at_ms}"),
        }
    }
}

/// Parses the command-line fault grammar, e.g. `wind:speed=12,dir=1.57,start=0,end=600000`.
impl FromStr for FaultSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, args) = s
            .split_once(':')
            .ok_or_else(|| format!("expected `<kind>:<key>=<value>,...`, got `{s}`"))?;
        let mut pairs = Vec::new();
        for part in args.split(',').filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| format!("expected key=value, got `{part}`"))?;
            pairs.push((k.trim(), v.trim()));
        }
        let get = |key: &str| -> Result<&str, String> {
            pairs
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| *v)
                .ok_or_else(|| format!("`{kind}` fault needs `{key}=`"))
        };
        let num = |key: &str| -> Result<f64, String> {
            get(key)?
                .parse::<f64>()
                .map_err(|_| format!("`{key}` is not a number"))
        };
        let ms = |key: &str| -> Result<i64, String> {
            get(key)?
                .parse::<i64>()
                .map_err(|_| format!("`{key}` is not an integer"))
        };
        let allowed: &[&str] = match kind {
            "wind" => &["speed", "dir", "start", "end"],
            "actuator" => &["factor", "start", "end"],
            "sensor_stuck" => &["feature", "value", "start", "end"],
            "engine_cutoff" => &["at"],
            other => return Err(format!("unknown fault kind `{other}`")),
        };
        if let Some((k, _)) = pairs.iter().find(|(k, _)| !allowed.contains(k)) {
            return Err(format!("unknown key `{k}` for `{kind}` fault"));
        }
        let spec = match kind {
            "wind" => FaultSpec::Wind {
                speed_mps: num("speed")?,
                direction_rad: num("dir")?,
                start_ms: ms("start")?,
                end_ms: ms("end")?,
            },
            "actuator" => FaultSpec::ActuatorCapacity {
                factor: num("factor")?,
                start_ms: ms("start")?,
                end_ms: ms("end")?,
            },
            "sensor_stuck" => FaultSpec::SensorStuck {
                feature: get("feature")?.parse()?,
                stuck_value: num("value")?,
                start_ms: ms("start")?,
                end_ms: ms("end")?,
            },
            _ => FaultSpec::EngineCutoff { at_ms: ms("at")? },
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_cli_grammar() {
        let f: FaultSpec = "wind:speed=12,dir=1.57,start=0,end=600000".parse().unwrap();
        assert_eq!(
            f,
            FaultSpec::Wind {
                speed_mps: 12.0,
                direction_rad: 1.57,
                start_ms: 0,
                end_ms: 600000
            }
        );
        let f: FaultSpec = "sensor_stuck:feature=roll,value=3.14159265,start=0,end=999999999"
            .parse()
            .unwrap();
        assert!(matches!(
            f,
            FaultSpec::SensorStuck {
                feature: Feature::Roll,
                ..
            }
        ));
        let f: FaultSpec = "engine_cutoff:at=120000".parse().unwrap();
        assert_eq!(f.interval(), (120000, i64::MAX));
    }

    #[test]
    fn display_round_trips() {
        for s in [
            "wind:speed=12.5,dir=0.3,start=0,end=10",
            "actuator:factor=0.7,start=5,end=100",
            "sensor_stuck:feature=baro_status,value=0,start=0,end=1000",
            "engine_cutoff:at=42",
        ] {
            let f: FaultSpec = s.parse().unwrap();
            assert_eq!(f.to_string().parse::<FaultSpec>().unwrap(), f);
        }
    }

    #[test]
    fn rejects_bad_faults() {
        assert!("actuator:factor=0,start=0,end=10".parse::<FaultSpec>().is_err());
        assert!("actuator:factor=1.2,start=0,end=10".parse::<FaultSpec>().is_err());
        assert!("wind:speed=3,dir=0,start=10,end=10".parse::<FaultSpec>().is_err());
        assert!("sensor_stuck:feature=roll,value=4,start=0,end=10"
            .parse::<FaultSpec>()
            .is_err());
        assert!("laser:power=1".parse::<FaultSpec>().is_err());
        assert!("wind:speed=3,dir=0,start=0,end=10,gust=2"
            .parse::<FaultSpec>()
            .is_err());
    }
}
