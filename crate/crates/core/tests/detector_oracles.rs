mod common;

use flightwatch::detectors::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Queries mixing fresh points, training duplicates and far outliers.
fn queries(rng: &mut ChaCha8Rng, train: &[Vec<f64>], d: usize) -> Vec<Vec<f64>> {
    let mut q = common::gaussian(rng, 8, d);
    q.push(train[rng.random_range(0..train.len())].clone());
    q.push(vec![100.0; d]);
    q.push((0..d).map(|_| rng.random_range(-4.0..4.0)).collect());
    q
}

#[test]
fn density_detectors_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..50 {
        let n = rng.random_range(25..=200);
        let d = rng.random_range(2..=4);
        let train = common::gaussian(&mut rng, n, d);
        let min_pts = rng.random_range(3..=6);
        let k = rng.random_range(3..=12);
        let eps = default_eps(&train, 4, 90.0).unwrap();

        let db = fit_dbscan(&train, eps, min_pts).unwrap();
        let op = fit_optics(&train, min_pts, 99.0).unwrap();
        let lof = fit_lof(&train, k, 1.5).unwrap();
        for x in queries(&mut rng, &train, d) {
            assert_eq!(
                db.predict(&x).unwrap().is_anomaly(),
                common::dbscan_is_anomaly(&train, eps, min_pts, &x)
            );
            assert_eq!(
                op.predict(&x).unwrap().is_anomaly(),
                common::optics_is_anomaly(&train, min_pts, 99.0, &x)
            );
            let (got, want) = (lof.score(&x), common::lof_score(&train, k, &x));
            assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "{got} vs {want}");
        }
    }
}

#[test]
fn optics_ordering_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let n = rng.random_range(10..80);
        let pts = common::gaussian(&mut rng, n, 3);
        let ours = optics_order(&pts, 4);
        assert_eq!(ours.reach, common::optics_reachability(&pts, 4));
    }
}

#[test]
fn optics_duplicate_and_far_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let train = common::gaussian(&mut rng, 60, 2);
    let m = fit_optics(&train, 5, 99.0).unwrap();
    // an interior point: the one closest to the sample mean
    let interior = train
        .iter()
        .min_by(|a, b| a[0].hypot(a[1]).total_cmp(&b[0].hypot(b[1])))
        .unwrap();
    assert_eq!(m.predict(interior).unwrap(), Vote::Normal);
    assert_eq!(m.predict(&[100.0, 0.0]).unwrap(), Vote::Anomaly);
    assert!(matches!(fit_optics(&train[..5], 5, 99.0), Err(DetectorError::InvalidParams(_))));
}

#[test]
fn lof_far_point_and_bad_k() {
    let train: Vec<Vec<f64>> = (0..25).map(|i| vec![(i % 5) as f64, (i / 5) as f64]).collect();
    let m = fit_lof(&train, 4, 1.5).unwrap();
    let far = m.score(&[100.0, 100.0]);
    assert!((far - common::lof_score(&train, 4, &[100.0, 100.0])).abs() < 1e-9 * far);
    assert!(far > 1.5);
    assert!(matches!(fit_lof(&train, 25, 1.5), Err(DetectorError::InvalidParams(_))));
}

#[test]
fn ocsvm_kkt_and_nu_property() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for nu in [0.05, 0.1] {
        for trial in 0..5 {
            let train = common::gaussian(&mut rng, 200, 3);
            let params = OcsvmParams {
                nu,
                gamma: default_gamma(&train),
                tol: 1e-6,
                max_iter: 10_000_000,
                seed: trial,
            };
            let m = fit_ocsvm(&train, &params).unwrap();
            let c = 1.0 / (nu * 200.0);
            assert!(m.coefficients.iter().all(|&a| (0.0..=c).contains(&a)));
            assert!((m.coefficients.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(common::kkt_residual(&train, &m) <= 1e-6);
            let outliers = train.iter().filter(|x| m.predict(x).unwrap().is_anomaly()).count();
            assert!(outliers as f64 / 200.0 <= nu + 0.02, "nu {nu}: {outliers} outliers");
        }
    }
}

#[test]
fn ocsvm_limits() {
    let same = vec![vec![1.0, 2.0]; 10];
    let p = OcsvmParams { nu: 0.1, gamma: 1.0, tol: 1e-6, max_iter: 1000, seed: 0 };
    let m = fit_ocsvm(&same, &p).unwrap();
    assert_eq!(m.predict(&[1.0, 2.0]).unwrap(), Vote::Normal);
    assert_eq!(m.predict(&[1e3, 1e3]).unwrap(), Vote::Anomaly);
    assert!(matches!(
        fit_ocsvm(&same, &OcsvmParams { gamma: 0.0, ..p }),
        Err(DetectorError::InvalidParams(_))
    ));
}

#[test]
fn kmeans_sse_never_increases() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for seed in 0..10 {
        let train = common::gaussian(&mut rng, 150, 3);
        let m = fit_kmeans(&train, 5, seed, 300, 99.5).unwrap();
        for w in m.sse_history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
        // the final assignment is a fixpoint of one more Lloyd step
        let again = fit_kmeans(&train, 5, seed, 300, 99.5).unwrap();
        assert_eq!(m, again);
    }
}

#[test]
fn bundle_round_trip_is_stable() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let train = common::gaussian(&mut rng, 120, 6);
    let cfg = DetectorConfig::default();
    let a = ModelBundle::fit(&train, &cfg).unwrap();
    let b = ModelBundle::fit(&train, &cfg).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    let back = ModelBundle::from_json(&a.to_json()).unwrap();
    assert_eq!(back, a);
    for x in common::gaussian(&mut rng, 10, 6) {
        assert_eq!(back.votes(&x).unwrap(), a.votes(&x).unwrap());
    }
    let bad = a.to_json().replacen("\"version\":1", "\"version\":9", 1);
    assert!(matches!(ModelBundle::from_json(&bad), Err(DetectorError::Bundle(_))));
    assert!(matches!(
        a.votes(&[0.0; 3]),
        Err(DetectorError::DimensionMismatch { expected: 6, got: 3 })
    ));
}
