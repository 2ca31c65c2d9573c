use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use shortarc::attributable::{curvature_snr, fit_attributable, weighted_polyfit};
use shortarc::constants::ARCSEC;
use shortarc::obs::{weight_matrix_for, Observation};

#[test]
fn polyfit_matches_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let t = [-1.0, -0.97, 0.02, 0.95, 1.0];
    let w: Vec<f64> = (0..5).map(|_| rng.gen_range(0.5..4.0)).collect();
    let y: Vec<f64> = t.iter().map(|ti| 0.3 - 0.02 * ti + 0.004 * ti * ti + 1e-3 * rng.sample::<f64, _>(StandardNormal)).collect();
    let (coef, cov) = weighted_polyfit(&t, &y, &w, 2).unwrap();

    let v = DMatrix::from_fn(5, 3, |i, j| t[i].powi(j as i32));
    let wm = DMatrix::from_diagonal(&DVector::from_column_slice(&w));
    let normal = v.transpose() * &wm * &v;
    let oracle = normal.clone().lu().solve(&(v.transpose() * &wm * DVector::from_column_slice(&y))).unwrap();
    let oracle_cov = normal.try_inverse().unwrap();
    for k in 0..3 {
        assert!((coef[k] - oracle[k]).abs() < 1e-10 * oracle[k].abs().max(1e-3), "coefficient {k}");
    }
    assert!((&cov - &oracle_cov).amax() < 1e-10 * oracle_cov.amax());
}

fn arc(kappa_arcsec: f64, sigma: f64, seed: u64) -> Vec<Observation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = [0.0, 0.02, 1.0, 1.02, 2.0, 2.02];
    t.iter()
        .map(|&ti| {
            let dt = ti - 1.01;
            // straight motion along the equator plus a declination bend
            let ra = 2.0 + 0.01 * dt + sigma * ARCSEC * rng.sample::<f64, _>(StandardNormal);
            let dec = kappa_arcsec * ARCSEC * dt * dt + sigma * ARCSEC * rng.sample::<f64, _>(StandardNormal);
            Observation::new(60_000.0 + ti, ra, dec, "500".into(), sigma, sigma, None).unwrap()
        })
        .collect()
}

#[test]
fn injected_curvature_is_significant() {
    // 100σ at the ends of the arc
    let obs = arc(100.0, 1.0, 1);
    let snr = curvature_snr(&obs, &weight_matrix_for(&obs));
    assert!(snr > 50.0, "SNR {snr}");
    let flat = arc(0.0, 1.0, 1);
    let snr = curvature_snr(&flat, &weight_matrix_for(&flat));
    assert!(snr < 5.0, "SNR {snr}");
}

#[test]
fn attributable_of_linear_motion() {
    let obs = arc(0.0, 1e-3, 2);
    let (attr, rms) = fit_attributable(&obs, &weight_matrix_for(&obs)).unwrap();
    assert!((attr.alpha - 2.0).abs() < 1e-8);
    assert!(attr.delta.abs() < 1e-8);
    assert!((attr.alpha_dot - 0.01).abs() < 1e-8);
    assert!(attr.delta_dot.abs() < 1e-8);
    assert!(rms < 5.0);
    assert!((attr.mean_epoch - 60_001.01).abs() < 1e-9);
}
