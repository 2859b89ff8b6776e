mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trailnav::pathfit::{eval_poly, fit_points};

use common::{normal_equations_fit, relative_error};

#[test]
fn qr_fit_matches_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let degree = rng.random_range(0..=5);
        let params: Vec<f64> = (0..20).map(|_| rng.random::<f64>()).collect();
        let values: Vec<f64> = (0..20).map(|_| rng.random::<f64>()).collect();
        let fit = fit_points(&params, &values, degree).unwrap();
        let oracle = normal_equations_fit(&params, &values, degree);
        worst = worst.max(relative_error(fit.as_slice(), &oracle));
    }
    assert!(worst < 1e-9, "worst relative error {worst:e}");
}

#[test]
fn square_systems_interpolate() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let degree = rng.random_range(0..=5);
        let m = degree + 1;
        // One point per stratum keeps the square system well separated.
        let params: Vec<f64> = (0..m).map(|i| (i as f64 + rng.random::<f64>()) / m as f64).collect();
        let values: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
        let fit = fit_points(&params, &values, degree).unwrap();
        for (p, y) in params.iter().zip(&values) {
            assert!((eval_poly(&fit, *p) - y).abs() < 1e-8);
        }
    }
}

#[test]
fn oracle_reproduces_known_polynomial() {
    let params: Vec<f64> = (0..12).map(|i| i as f64 / 11.0).collect();
    let values: Vec<f64> = params.iter().map(|p| 1.0 - 2.0 * p + 0.5 * p * p * p).collect();
    let b = normal_equations_fit(&params, &values, 3);
    assert!(relative_error(&b, &[1.0, -2.0, 0.0, 0.5]) < 1e-14);
}
