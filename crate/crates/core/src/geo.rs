//! Local tangent-plane helpers around a home coordinate.

const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Great-circle distance in meters between two `[lat, lon]` points (haversine).
pub fn distance_m(a: [f64; 2], b: [f64; 2]) -> f64 {
    let (lat1, lat2) = (a[0].to_radians(), b[0].to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b[1] - a[1]).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Converts a north/east offset in meters from `home` into `[lat, lon]`.
pub fn offset_to_latlon(home: [f64; 2], north_m: f64, east_m: f64) -> [f64; 2] {
    let dlat = north_m / EARTH_RADIUS_M;
    let dlon = east_m / (EARTH_RADIUS_M * home[0].to_radians().cos());
    [home[0] + dlat.to_degrees(), home[1] + dlon.to_degrees()]
}

/// Inverse of [`offset_to_latlon`]: `(north_m, east_m)` of `p` relative to `home`.
pub fn latlon_to_offset(home: [f64; 2], p: [f64; 2]) -> (f64, f64) {
    let north = (p[0] - home[0]).to_radians() * EARTH_RADIUS_M;
    let east = (p[1] - home[1]).to_radians() * EARTH_RADIUS_M * home[0].to_radians().cos();
    (north, east)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets_round_trip_and_match_haversine() {
        let home = [1.3521, 103.8198];
        let p = offset_to_latlon(home, 300.0, -400.0);
        let (n, e) = latlon_to_offset(home, p);
        assert!((n - 300.0).abs() < 1e-6 && (e + 400.0).abs() < 1e-6);
        assert!((distance_m(home, p) - 500.0).abs() < 0.05);
        assert_eq!(distance_m(home, home), 0.0);
    }
}
