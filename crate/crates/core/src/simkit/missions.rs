use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::MissionSpec;
use crate::geo;

/// Home used by [`base_mission`].
pub const BASE_HOME: [f64; 2] = [-35.363261, 149.165230];

const TAKEOFF_ALT: f64 = 20.0;
const HIGH_ALT: f64 = 30.0;

/// A closed loop of four waypoints forming a regular pentagon with home,
/// 400 m sides, flown clockwise. The middle of the loop is 10 m higher.
pub fn base_mission() -> MissionSpec {
    let side = 400.0;
    let alts = [TAKEOFF_ALT, HIGH_ALT, HIGH_ALT, TAKEOFF_ALT];
    let (mut n, mut e) = (0.0_f64, 0.0_f64);
    let waypoints = alts
        .iter()
        .enumerate()
        .map(|(i, &alt)| {
            let heading = (72.0 * i as f64).to_radians();
            n += side * heading.cos();
            e += side * heading.sin();
            let ll = geo::offset_to_latlon(BASE_HOME, n, e);
            [ll[0], ll[1], alt]
        })
        .collect();
    MissionSpec {
        home: BASE_HOME,
        takeoff_alt_m: TAKEOFF_ALT,
        waypoints,
        cruise_speed: 5.0,
        tick_ms: 1000,
    }
}

/// A mission with 3 to 6 waypoints on random headings and leg lengths,
/// starting from a home within about 2 km of [`BASE_HOME`]. Intermediate
/// waypoints sit at one of the base mission's two altitude levels; the last
/// one is at takeoff altitude.
pub fn random_mission(seed: u64) -> MissionSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(11);
    let home = [
        BASE_HOME[0] + rng.random_range(-0.02..0.02),
        BASE_HOME[1] + rng.random_range(-0.02..0.02),
    ];
    let count = rng.random_range(3..=6usize);
    let (mut n, mut e) = (0.0_f64, 0.0_f64);
    let mut waypoints = Vec::with_capacity(count);
    for i in 0..count {
        loop {
            let heading = rng.random_range(0.0..std::f64::consts::TAU);
            let len = rng.random_range(150.0..450.0);
            let (nn, ne) = (n + len * heading.cos(), e + len * heading.sin());
            // keep every waypoint well clear of home so the return leg is a real leg
            if (nn * nn + ne * ne).sqrt() >= 60.0 {
                n = nn;
                e = ne;
                break;
            }
        }
        let alt = if i + 1 == count || rng.random_bool(0.5) {
            TAKEOFF_ALT
        } else {
            HIGH_ALT
        };
        let ll = geo::offset_to_latlon(home, n, e);
        waypoints.push([ll[0], ll[1], alt]);
    }
    MissionSpec {
        home,
        takeoff_alt_m: TAKEOFF_ALT,
        waypoints,
        cruise_speed: 5.0,
        tick_ms: 1000,
    }
}
