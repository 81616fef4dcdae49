//! Seeded point-mass quadrotor mission simulator with fault injection.
//!
//! The airframe is a point mass whose horizontal acceleration comes from a
//! first-order-lagged tilt and whose vertical acceleration comes from
//! collective thrust. Sensor noise, wind gusts, actuator ripple and crash
//! tumbling each draw from their own random stream, so adding a fault never
//! perturbs the samples that a fault-free run would have produced.

mod fault;
mod missions;

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo;
use crate::telemetry::{FlightLog, LogRecord, MissionMeta, Mode};

pub use fault::FaultSpec;
pub use missions::{base_mission, random_mission};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("infeasible mission: {0}")]
    InfeasibleMission(String),
    #[error("conflicting faults: {0}")]
    ConflictingFaults(String),
    #[error("invalid fault: {0}")]
    InvalidFault(String),
    #[error("wind calibration failed: {0}")]
    CalibrationFailed(String),
    #[error("labelled log has no anomalous records")]
    NoAnomalies,
}

fn default_cruise_speed() -> f64 {
    5.0
}

fn default_tick_ms() -> i64 {
    1000
}

/// A waypoint mission. Waypoints are `[lat, lon, alt_m]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissionSpec {
    pub home: [f64; 2],
    pub takeoff_alt_m: f64,
    pub waypoints: Vec<[f64; 3]>,
    #[serde(default = "default_cruise_speed")]
    pub cruise_speed: f64,
    #[serde(default = "default_tick_ms")]
    pub tick_ms: i64,
}

impl MissionSpec {
    pub fn meta(&self) -> MissionMeta {
        MissionMeta {
            home: self.home,
            takeoff_alt_m: self.takeoff_alt_m,
            waypoints: self.waypoints.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::InfeasibleMission(msg));
        if !(self.takeoff_alt_m > 0.0 && self.takeoff_alt_m.is_finite()) {
            return bad(format!("takeoff altitude {} must be positive", self.takeoff_alt_m));
        }
        if self.waypoints.is_empty() {
            return bad("mission has no waypoints".into());
        }
        if !(self.cruise_speed > 0.0 && self.cruise_speed.is_finite()) {
            return bad(format!("cruise speed {} must be positive", self.cruise_speed));
        }
        if self.tick_ms <= 0 {
            return bad(format!("tick {} ms must be positive", self.tick_ms));
        }
        if self.home[0].abs() > 90.0 || self.home[1].abs() > 180.0 {
            return bad("home outside valid coordinates".into());
        }
        for wp in &self.waypoints {
            if wp[0].abs() > 90.0 || wp[1].abs() > 180.0 || wp[2].is_nan() || wp[2] <= 0.0 {
                return bad(format!("invalid waypoint {wp:?}"));
            }
        }
        Ok(())
    }

    /// Upper bound on the simulated log length in milliseconds. Airborne time
    /// past the battery budget triggers a failsafe motor cut, after which the
    /// log runs a fixed tail.
    pub fn duration_bound_ms(&self) -> i64 {
        self.battery_budget_ms() + 60_000
    }

    fn battery_budget_ms(&self) -> i64 {
        let legs = self.local_legs();
        let mut secs = INIT_MS as f64 / 1000.0 + self.takeoff_alt_m / CLIMB_RATE;
        let mut prev = [0.0, 0.0, self.takeoff_alt_m];
        for p in legs.iter().chain(std::iter::once(&[0.0, 0.0, self.takeoff_alt_m])) {
            let d = ((p[0] - prev[0]).powi(2) + (p[1] - prev[1]).powi(2)).sqrt();
            secs += d / self.cruise_speed + (p[2] - prev[2]).abs() / CLIMB_RATE + 8.0;
            prev = *p;
        }
        secs += self.takeoff_alt_m / LAND_RATE;
        (BUDGET_FACTOR * secs * 1000.0) as i64
    }

    /// Waypoints as local `[north, east, up]` metres relative to home.
    fn local_legs(&self) -> Vec<[f64; 3]> {
        self.waypoints
            .iter()
            .map(|wp| {
                let (n, e) = geo::latlon_to_offset(self.home, [wp[0], wp[1]]);
                [n, e, wp[2]]
            })
            .collect()
    }
}

/// A simulated log with its per-record ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledLog {
    pub log: FlightLog,
    pub anomaly_mask: Vec<bool>,
    /// Every waypoint was reached and the drone landed at home.
    pub completed: bool,
}

impl LabeledLog {
    /// Sidecar label file: `timestamp_ms,is_anomaly`.
    pub fn labels_csv(&self) -> String {
        let mut out = String::from("timestamp_ms,is_anomaly\n");
        for (r, &a) in self.log.records.iter().zip(&self.anomaly_mask) {
            out.push_str(&format!("{},{}\n", r.timestamp_ms, u8::from(a)));
        }
        out
    }
}

/// Parses a sidecar label file into a mask.
pub fn parse_labels(text: &str) -> Result<Vec<(i64, bool)>, String> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim() == "timestamp_ms,is_anomaly" => {}
        _ => return Err("label file must start with `timestamp_ms,is_anomaly`".into()),
    }
    lines
        .enumerate()
        .map(|(i, l)| {
            let (ts, flag) = l
                .split_once(',')
                .ok_or_else(|| format!("label line {}: expected two fields", i + 2))?;
            let ts = ts
                .trim()
                .parse::<i64>()
                .map_err(|_| format!("label line {}: bad timestamp", i + 2))?;
            match flag.trim() {
                "0" => Ok((ts, false)),
                "1" => Ok((ts, true)),
                other => Err(format!("label line {}: bad flag `{other}`", i + 2)),
            }
        })
        .collect()
}

const G: f64 = 9.81;
const HOVER_FRAC: f64 = 0.40;
const MAX_TILT: f64 = 0.6;
const DRAG_H: f64 = 0.35;
/// Vertical damping with rotors spinning; unpowered falls see `DRAG_FALL`.
const DRAG_V: f64 = 2.5;
const DRAG_FALL: f64 = 0.3;
const ACC_H: f64 = 1.5;
const ACC_V: f64 = 2.0;
pub const CLIMB_RATE: f64 = 3.0;
const DESCENT_RATE: f64 = 2.0;
const LAND_RATE: f64 = 0.7;
const YAW_RATE: f64 = 1.5;
const TAU_ATT: f64 = 0.3;
const WP_RADIUS: f64 = 1.5;
const HOME_RADIUS: f64 = 1.0;
const INIT_MS: i64 = 5000;
const LANDED_TAIL_MS: i64 = 3000;
const CRASH_TAIL_MS: i64 = 10_000;
const BUDGET_FACTOR: f64 = 2.5;
const SUBSTEP_MS: i64 = 100;

const NOISE_POS: f64 = 0.1;
const NOISE_ALT: f64 = 0.1;
const NOISE_ATT: f64 = 0.01;
const NOISE_YAW: f64 = 0.02;
const NOISE_THROTTLE: f64 = 1.0;
const NOISE_SPEED: f64 = 0.1;
const NOISE_CLIMB: f64 = 0.1;

const GUST_TAU: f64 = 2.0;
const GUST_FRAC: f64 = 0.15;
const WOBBLE_PER_MPS: f64 = 0.02;
const WOBBLE_HZ: f64 = 0.37;
const GROUND_JITTER_PER_MPS: f64 = 0.003;
const RIPPLE_TAU: f64 = 0.5;
const RIPPLE_GAIN: f64 = 0.2;

/// Largest vertical speed the airframe can reach, powered or falling.
pub const MAX_VERTICAL_SPEED: f64 = G / DRAG_FALL;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    Init,
    Takeoff,
    Leg(usize),
    ReturnHome,
    Descend,
    Landed,
    Falling,
    Crashed,
}

struct Streams {
    sensor: ChaCha8Rng,
    gust: ChaCha8Rng,
    ripple: ChaCha8Rng,
    tumble: ChaCha8Rng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        let stream = |id: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(id);
            rng
        };
        Streams {
            sensor: stream(0),
            gust: stream(1),
            ripple: stream(2),
            tumble: stream(3),
        }
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w < -PI {
        w + TAU
    } else {
        w
    }
}

struct Sim<'a> {
    mission: &'a MissionSpec,
    faults: &'a [FaultSpec],
    legs: Vec<[f64; 3]>,
    streams: Streams,
    t_ms: i64,
    pos: [f64; 3],
    vel: [f64; 3],
    tilt: [f64; 2],
    yaw: f64,
    thrust: f64,
    throttle: f64,
    stage: Stage,
    mode: Mode,
    wp_index: u32,
    hold: [f64; 2],
    gust: [f64; 2],
    ripple: f64,
    tumble_rate: [f64; 3],
    stage_since_ms: i64,
    completed: bool,
    budget_ms: i64,
}

impl<'a> Sim<'a> {
    fn new(mission: &'a MissionSpec, faults: &'a [FaultSpec], seed: u64) -> Self {
        Sim {
            mission,
            faults,
            legs: mission.local_legs(),
            streams: Streams::new(seed),
            t_ms: 0,
            pos: [0.0; 3],
            vel: [0.0; 3],
            tilt: [0.0; 2],
            yaw: 0.0,
            thrust: 0.0,
            throttle: 0.0,
            stage: Stage::Init,
            mode: Mode::Stabilise,
            wp_index: 0,
            hold: [0.0; 2],
            gust: [0.0; 2],
            ripple: 0.0,
            tumble_rate: [0.0; 3],
            stage_since_ms: 0,
            completed: false,
            budget_ms: mission.battery_budget_ms(),
        }
    }

    fn enter(&mut self, stage: Stage) {
        self.stage = stage;
        self.stage_since_ms = self.t_ms;
        match stage {
            Stage::Takeoff => {
                self.mode = Mode::Auto;
                self.hold = [0.0, 0.0];
            }
            Stage::Leg(k) => {
                self.wp_index = k as u32 + 1;
                self.hold = [self.pos[0], self.pos[1]];
            }
            Stage::ReturnHome => {
                self.mode = Mode::Rtl;
                self.wp_index = self.legs.len() as u32 + 1;
                self.hold = [self.pos[0], self.pos[1]];
            }
            Stage::Falling => {
                let r = &mut self.streams.tumble;
                for rate in &mut self.tumble_rate {
                    let mag = r.random_range(1.0..3.0);
                    *rate = if r.random_bool(0.5) { mag } else { -mag };
                }
            }
            Stage::Landed => self.completed = true,
            _ => {}
        }
    }

    fn airborne(&self) -> bool {
        matches!(
            self.stage,
            Stage::Takeoff | Stage::Leg(_) | Stage::ReturnHome | Stage::Descend | Stage::Falling
        ) && !(self.stage == Stage::Takeoff && self.pos[2] <= 0.0)
    }

    fn capacity(&self) -> f64 {
        let mut cap = 1.0_f64;
        for f in self.faults {
            match *f {
                FaultSpec::ActuatorCapacity { factor, .. } if f.active_at(self.t_ms) => {
                    cap = cap.min(factor)
                }
                FaultSpec::EngineCutoff { at_ms } if self.t_ms >= at_ms => cap = 0.0,
                _ => {}
            }
        }
        cap
    }

    /// Steady wind vector (north, east) and total speed of active wind faults.
    fn wind(&self) -> ([f64; 2], f64, bool) {
        let mut w = [0.0, 0.0];
        let mut speed = 0.0;
        let mut any = false;
        for f in self.faults {
            if let FaultSpec::Wind {
                speed_mps,
                direction_rad,
                ..
            } = *f
            {
                if f.active_at(self.t_ms) {
                    w[0] += speed_mps * direction_rad.cos();
                    w[1] += speed_mps * direction_rad.sin();
                    speed += speed_mps;
                    any = true;
                }
            }
        }
        (w, speed, any)
    }

    fn wobble(&self, wind_speed: f64) -> [f64; 2] {
        let a = WOBBLE_PER_MPS * wind_speed;
        let ph = TAU * WOBBLE_HZ * self.t_ms as f64 / 1000.0;
        [a * ph.sin(), a * ph.cos()]
    }

    /// Horizontal target for the current stage, or `None` when the drone
    /// should not translate.
    fn horizontal_target(&self) -> Option<([f64; 2], f64)> {
        match self.stage {
            Stage::Takeoff | Stage::Descend => Some(([0.0, 0.0], self.mission.takeoff_alt_m)),
            Stage::Leg(k) => Some(([self.legs[k][0], self.legs[k][1]], self.legs[k][2])),
            Stage::ReturnHome => Some(([0.0, 0.0], self.mission.takeoff_alt_m)),
            _ => None,
        }
    }

    fn substep(&mut self, dt: f64) {
        let cap = self.capacity();
        if cap == 0.0 && self.airborne() && self.stage != Stage::Falling {
            self.enter(Stage::Falling);
        }
        if self.t_ms >= self.budget_ms
            && self.airborne()
            && !matches!(self.stage, Stage::Falling)
        {
            self.enter(Stage::Falling);
        }

        let (wind_steady, wind_speed, wind_on) = self.wind();
        if wind_on {
            let sigma = GUST_FRAC * wind_speed;
            let k = (2.0 * dt / GUST_TAU).sqrt();
            for g in &mut self.gust {
                let n = normal(&mut self.streams.gust);
                *g += -*g * dt / GUST_TAU + sigma * k * n;
            }
        } else {
            self.gust = [0.0, 0.0];
        }
        let wind = [wind_steady[0] + self.gust[0], wind_steady[1] + self.gust[1]];

        if cap < 1.0 && cap > 0.0 {
            let sigma = RIPPLE_GAIN * (1.0 - cap);
            let n = normal(&mut self.streams.ripple);
            self.ripple += -self.ripple * dt / RIPPLE_TAU + sigma * (2.0 * dt / RIPPLE_TAU).sqrt() * n;
        } else {
            self.ripple = 0.0;
        }

        match self.stage {
            Stage::Init | Stage::Landed | Stage::Crashed => {
                self.vel = [0.0; 3];
                self.thrust = 0.0;
                self.throttle = 0.0;
                if self.stage != Stage::Crashed {
                    self.tilt = [0.0, 0.0];
                }
                return;
            }
            Stage::Falling => {
                self.thrust = 0.0;
                self.throttle = 0.0;
                self.tilt[0] += self.tumble_rate[0] * dt;
                self.tilt[1] += self.tumble_rate[1] * dt;
                self.yaw = wrap_angle(self.yaw + self.tumble_rate[2] * dt);
                for (v, w) in self.vel.iter_mut().zip(wind) {
                    *v += DRAG_FALL * (w - *v) * dt;
                }
                self.vel[2] += (-G - DRAG_FALL * self.vel[2]) * dt;
                self.integrate_position(dt);
                if self.pos[2] <= 0.0 {
                    self.pos[2] = 0.0;
                    self.vel = [0.0; 3];
                    self.enter(Stage::Crashed);
                }
                return;
            }
            _ => {}
        }

        let (target, target_alt) = self.horizontal_target().unwrap_or(([0.0, 0.0], 0.0));
        let dn = target[0] - self.pos[0];
        let de = target[1] - self.pos[1];
        let dist = (dn * dn + de * de).sqrt();

        let translating = matches!(self.stage, Stage::Leg(_) | Stage::ReturnHome);
        let mut goal = target;
        if translating && dist > 2.0 * WP_RADIUS {
            let want = de.atan2(dn);
            let err = wrap_angle(want - self.yaw);
            let step = err.clamp(-YAW_RATE * dt, YAW_RATE * dt);
            self.yaw = wrap_angle(self.yaw + step);
            if err.abs() > 0.1 {
                goal = self.hold;
            }
        }
        if !translating {
            goal = self.hold;
        }

        let gn = goal[0] - self.pos[0];
        let ge = goal[1] - self.pos[1];
        let gdist = (gn * gn + ge * ge).sqrt();
        let vmag = self
            .mission
            .cruise_speed
            .min((2.0 * 0.8 * ACC_H * gdist).sqrt())
            .min(gdist);
        let v_des = if gdist > 1e-9 {
            [vmag * gn / gdist, vmag * ge / gdist]
        } else {
            [0.0, 0.0]
        };
        let mut a_cmd = [1.2 * (v_des[0] - self.vel[0]), 1.2 * (v_des[1] - self.vel[1])];
        let a_norm = (a_cmd[0] * a_cmd[0] + a_cmd[1] * a_cmd[1]).sqrt();
        if a_norm > ACC_H {
            a_cmd = [a_cmd[0] * ACC_H / a_norm, a_cmd[1] * ACC_H / a_norm];
        }
        let mut f = [
            a_cmd[0] - DRAG_H * (wind[0] - self.vel[0]),
            a_cmd[1] - DRAG_H * (wind[1] - self.vel[1]),
        ];
        let f_max = G * MAX_TILT.tan();
        let f_norm = (f[0] * f[0] + f[1] * f[1]).sqrt();
        if f_norm > f_max {
            f = [f[0] * f_max / f_norm, f[1] * f_max / f_norm];
        }

        let tau = TAU_ATT / cap.max(0.3);
        for (t, fi) in self.tilt.iter_mut().zip(f) {
            let cmd = (fi / G).atan();
            *t += (cmd - *t) * (dt / tau).min(1.0);
        }
        let wob = if self.airborne() {
            self.wobble(wind_speed)
        } else {
            [0.0, 0.0]
        };
        let tn = self.tilt[0] + wob[0];
        let te = self.tilt[1] + wob[1];

        let vz_des = match self.stage {
            Stage::Descend => {
                if self.pos[2] > 5.0 {
                    -DESCENT_RATE
                } else {
                    -LAND_RATE
                }
            }
            _ => (target_alt - self.pos[2]).clamp(-DESCENT_RATE, CLIMB_RATE),
        };
        let az_cmd = (2.0 * (vz_des - self.vel[2])).clamp(-ACC_V, ACC_V);
        let tilt_cos = tn.cos() * te.cos();
        let t_full = G / HOVER_FRAC;
        let t_max = t_full * cap;
        let needed = (G + az_cmd + DRAG_V * self.vel[2]) / tilt_cos;
        let thrust = needed.clamp(0.0, t_max) * (1.0 + self.ripple);
        self.thrust = thrust.max(0.0);
        self.throttle = (100.0 * self.thrust / t_max).clamp(0.0, 100.0);

        let acc = [
            self.thrust * tn.sin() + DRAG_H * (wind[0] - self.vel[0]),
            self.thrust * te.sin() + DRAG_H * (wind[1] - self.vel[1]),
            self.thrust * tilt_cos - G - DRAG_V * self.vel[2],
        ];
        for (v, a) in self.vel.iter_mut().zip(acc) {
            *v += a * dt;
        }
        self.integrate_position(dt);
        if self.pos[2] <= 0.0 {
            self.pos[2] = 0.0;
            if self.vel[2] < 0.0 {
                self.vel[2] = 0.0;
            }
            self.vel[0] = 0.0;
            self.vel[1] = 0.0;
            if self.stage == Stage::Descend {
                self.enter(Stage::Landed);
                return;
            }
        }
        self.advance_stage();
    }

    fn integrate_position(&mut self, dt: f64) {
        for i in 0..3 {
            self.pos[i] += self.vel[i] * dt;
        }
    }

    fn advance_stage(&mut self) {
        match self.stage {
            Stage::Takeoff if self.pos[2] >= self.mission.takeoff_alt_m - 0.2 => {
                self.enter(Stage::Leg(0))
            }
            Stage::Leg(k) => {
                let wp = self.legs[k];
                let d = ((wp[0] - self.pos[0]).powi(2) + (wp[1] - self.pos[1]).powi(2)).sqrt();
                if d <= WP_RADIUS && (wp[2] - self.pos[2]).abs() <= 0.5 {
                    if k + 1 < self.legs.len() {
                        self.enter(Stage::Leg(k + 1));
                    } else {
                        self.enter(Stage::ReturnHome);
                    }
                }
            }
            Stage::ReturnHome => {
                let d = (self.pos[0].powi(2) + self.pos[1].powi(2)).sqrt();
                if d <= HOME_RADIUS
                    && (self.pos[2] - self.mission.takeoff_alt_m).abs() < 0.5
                {
                    self.hold = [0.0, 0.0];
                    self.enter(Stage::Descend);
                }
            }
            _ => {}
        }
    }

    fn finished(&self) -> bool {
        match self.stage {
            Stage::Landed => self.t_ms - self.stage_since_ms >= LANDED_TAIL_MS,
            Stage::Crashed => self.t_ms - self.stage_since_ms >= CRASH_TAIL_MS,
            _ => false,
        }
    }

    fn sample(&mut self) -> LogRecord {
        let s = &mut self.streams.sensor;
        let noise: [f64; 9] = std::array::from_fn(|_| normal(s));
        let on_ground = !self.airborne();
        let (_, wind_speed, _) = self.wind();

        let (mut roll, mut pitch) = {
            let (sy, cy) = self.yaw.sin_cos();
            let wob = if on_ground {
                [0.0, 0.0]
            } else {
                self.wobble(wind_speed)
            };
            let tn = self.tilt[0] + wob[0];
            let te = self.tilt[1] + wob[1];
            let fwd = tn * cy + te * sy;
            let right = -tn * sy + te * cy;
            (right, -fwd)
        };
        if on_ground && wind_speed > 0.0 && self.stage != Stage::Crashed {
            let j = GROUND_JITTER_PER_MPS * wind_speed;
            roll += j * normal(&mut self.streams.gust);
            pitch += j * normal(&mut self.streams.gust);
        }
        let s_noise = |i: usize, sigma: f64| noise[i] * sigma;
        let ll = geo::offset_to_latlon(
            self.mission.home,
            self.pos[0] + s_noise(0, NOISE_POS),
            self.pos[1] + s_noise(1, NOISE_POS),
        );
        let powered = matches!(
            self.stage,
            Stage::Takeoff | Stage::Leg(_) | Stage::ReturnHome | Stage::Descend
        );
        let (rel_alt, climb) = if on_ground {
            (0.0, 0.0)
        } else {
            (
                (self.pos[2] + s_noise(2, NOISE_ALT)).max(0.0),
                self.vel[2] + s_noise(8, NOISE_CLIMB),
            )
        };
        let hspeed = (self.vel[0].powi(2) + self.vel[1].powi(2)).sqrt();
        let mut rec = LogRecord {
            timestamp_ms: self.t_ms,
            mode: self.mode,
            lat: ll[0],
            lon: ll[1],
            rel_alt,
            roll: wrap_angle(roll + s_noise(3, NOISE_ATT)),
            pitch: wrap_angle(pitch + s_noise(4, NOISE_ATT)),
            yaw: wrap_angle(self.yaw + s_noise(5, NOISE_YAW)),
            throttle: if powered && self.throttle > 0.0 {
                (self.throttle + s_noise(6, NOISE_THROTTLE)).clamp(0.0, 100.0)
            } else {
                0.0
            },
            groundspeed: (hspeed + s_noise(7, NOISE_SPEED)).abs(),
            climb,
            baro_status: 1,
            gps_fix: 3,
            wp_index: self.wp_index,
        };
        for f in self.faults {
            if let FaultSpec::SensorStuck {
                feature,
                stuck_value,
                ..
            } = *f
            {
                if f.active_at(self.t_ms) {
                    rec.set(feature, stuck_value);
                }
            }
        }
        rec
    }
}

fn check_faults(mission: &MissionSpec, faults: &[FaultSpec]) -> Result<(), SimError> {
    let bound = mission.duration_bound_ms();
    for f in faults {
        f.validate().map_err(SimError::InvalidFault)?;
        if f.interval().0 >= bound {
            return Err(SimError::InvalidFault(format!(
                "`{f}` starts after the mission duration bound of {bound} ms"
            )));
        }
    }
    for (i, a) in faults.iter().enumerate() {
        for b in &faults[i + 1..] {
            if let (
                FaultSpec::SensorStuck { feature: fa, .. },
                FaultSpec::SensorStuck { feature: fb, .. },
            ) = (a, b)
            {
                let (sa, ea) = a.interval();
                let (sb, eb) = b.interval();
                if fa == fb && sa < eb && sb < ea {
                    return Err(SimError::ConflictingFaults(format!(
                        "`{a}` overlaps `{b}`"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Flies `mission` under `faults`. Identical inputs give bit-identical output.
pub fn simulate(
    mission: &MissionSpec,
    faults: &[FaultSpec],
    seed: u64,
) -> Result<LabeledLog, SimError> {
    mission.validate()?;
    check_faults(mission, faults)?;

    let tick = mission.tick_ms;
    let substeps = ((tick + SUBSTEP_MS / 2) / SUBSTEP_MS).max(1);
    let dt = tick as f64 / 1000.0 / substeps as f64;
    let hard_stop = mission.duration_bound_ms();

    let mut sim = Sim::new(mission, faults, seed);
    let mut records = Vec::new();
    let mut mask = Vec::new();
    loop {
        records.push(sim.sample());
        mask.push(faults.iter().any(|f| f.active_at(sim.t_ms)));
        if sim.finished() || sim.t_ms >= hard_stop {
            break;
        }
        let tick_start = sim.t_ms;
        for i in 0..substeps {
            sim.t_ms = tick_start + i * tick / substeps;
            if sim.stage == Stage::Init && sim.t_ms >= INIT_MS {
                sim.enter(Stage::Takeoff);
            }
            sim.substep(dt);
        }
        sim.t_ms = tick_start + tick;
    }

    let log = FlightLog {
        records,
        commands: Vec::new(),
        meta: Some(mission.meta()),
    };
    Ok(LabeledLog {
        log,
        anomaly_mask: mask,
        completed: sim.completed,
    })
}

/// Lower and upper end of the wind speed search in m/s.
pub const WIND_SEARCH_RANGE: (f64, f64) = (0.0, 40.0);
/// Strong wind is this multiple of the lowest speed found to defeat the mission.
pub const STRONG_WIND_MARGIN: f64 = 1.25;
/// Mild wind as a fraction of the strong wind speed.
pub const MILD_WIND_FRACTION: f64 = 0.25;

fn whole_mission_wind(mission: &MissionSpec, speed: f64, dir: f64) -> FaultSpec {
    FaultSpec::Wind {
        speed_mps: speed,
        direction_rad: dir,
        start_ms: 0,
        end_ms: mission.duration_bound_ms(),
    }
}

/// Wind direction used by [`windy_pair`] for a given seed.
pub fn wind_direction(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(7);
    rng.random_range(0.0..TAU)
}

/// Bisects [`WIND_SEARCH_RANGE`] for the lowest whole-mission wind speed
/// (blowing towards [`wind_direction`]) that stops the mission from
/// completing, and returns that speed times [`STRONG_WIND_MARGIN`].
pub fn calibrate_strong_wind(mission: &MissionSpec, seed: u64) -> Result<f64, SimError> {
    let dir = wind_direction(seed);
    let completes = |speed: f64| -> Result<bool, SimError> {
        Ok(simulate(mission, &[whole_mission_wind(mission, speed, dir)], seed)?.completed)
    };
    let (mut lo, mut hi) = WIND_SEARCH_RANGE;
    if !completes(lo)? {
        return Err(SimError::CalibrationFailed(
            "mission does not complete without wind".into(),
        ));
    }
    if completes(hi)? {
        return Err(SimError::CalibrationFailed(format!(
            "mission still completes at {hi} m/s"
        )));
    }
    for _ in 0..12 {
        let mid = 0.5 * (lo + hi);
        if completes(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((hi * STRONG_WIND_MARGIN).min(WIND_SEARCH_RANGE.1))
}

/// Returns `(strong, mild)` whole-mission wind runs: the strong wind comes
/// from [`calibrate_strong_wind`] and defeats the mission, the mild one is
/// [`MILD_WIND_FRACTION`] of it and lets the mission finish.
pub fn windy_pair(mission: &MissionSpec, seed: u64) -> Result<(LabeledLog, LabeledLog), SimError> {
    let strong_speed = calibrate_strong_wind(mission, seed)?;
    let dir = wind_direction(seed);
    let run = |speed: f64| simulate(mission, &[whole_mission_wind(mission, speed, dir)], seed);
    let strong = run(strong_speed)?;
    let mild = run(strong_speed * MILD_WIND_FRACTION)?;
    if strong.completed || !mild.completed {
        return Err(SimError::CalibrationFailed(format!(
            "non-monotone outcome around {strong_speed:.2} m/s"
        )));
    }
    Ok((strong, mild))
}

/// Keeps only the records labelled anomalous.
pub fn extract_anomalous_segment(labeled: &LabeledLog) -> Result<FlightLog, SimError> {
    let records: Vec<LogRecord> = labeled
        .log
        .records
        .iter()
        .zip(&labeled.anomaly_mask)
        .filter(|(_, &a)| a)
        .map(|(r, _)| r.clone())
        .collect();
    if records.is_empty() {
        return Err(SimError::NoAnomalies);
    }
    Ok(FlightLog {
        records,
        commands: labeled.log.commands.clone(),
        meta: labeled.log.meta.clone(),
    })
}

/// Mean 3-D distance from each waypoint-leg record to the segment it is flying.
/// Legs run from home at takeoff altitude to the first waypoint, then between
/// consecutive waypoints. `None` without metadata or leg records.
pub fn mean_tracking_error(log: &FlightLog) -> Option<f64> {
    let meta = log.meta.as_ref()?;
    let mut pts = vec![[0.0, 0.0, meta.takeoff_alt_m]];
    for wp in &meta.waypoints {
        let (n, e) = geo::latlon_to_offset(meta.home, [wp[0], wp[1]]);
        pts.push([n, e, wp[2]]);
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for r in &log.records {
        let k = r.wp_index as usize;
        if r.mode != Mode::Auto || k == 0 || k >= pts.len() {
            continue;
        }
        let (n, e) = geo::latlon_to_offset(meta.home, [r.lat, r.lon]);
        total += segment_distance([n, e, r.rel_alt], pts[k - 1], pts[k]);
        count += 1;
    }
    (count > 0).then(|| total / count as f64)
}

fn segment_distance(p: [f64; 3], a: [f64; 3], b: [f64; 3]) -> f64 {
    let ab: Vec<f64> = (0..3).map(|i| b[i] - a[i]).collect();
    let ap: Vec<f64> = (0..3).map(|i| p[i] - a[i]).collect();
    let len2: f64 = ab.iter().map(|v| v * v).sum();
    let t = if len2 > 0.0 {
        (ab.iter().zip(&ap).map(|(x, y)| x * y).sum::<f64>() / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (0..3)
        .map(|i| (ap[i] - t * ab[i]).powi(2))
        .sum::<f64>()
        .sqrt()
}
