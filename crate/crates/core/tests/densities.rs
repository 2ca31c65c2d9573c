use nalgebra::{DMatrix, DVector, Matrix4, Matrix4x2, Matrix6, Vector2, Vector4};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use shortarc::mov::{MOVOrbit, OrbitAtEpoch};
use shortarc::probability::{
    conditional_attributable, gamma_rho_inverse, gramian_mu, impact_probability, jeffreys_weights, sample_weights, schur_rho,
    WeightedSample,
};
use shortarc::sampling::SamplePoint;

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

/// MOV point of the linear model `ξ = B_A A + B_ρ ρ + c` at `ρ`.
fn linear_mov(b_a: &DMatrix<f64>, b_rho: &DMatrix<f64>, c: &DVector<f64>, rho: Vector2<f64>) -> MOVOrbit {
    let offset = b_rho * DVector::from_column_slice(rho.as_slice()) + c;
    let normal = b_a.transpose() * b_a;
    let a = normal.clone().lu().solve(&(-(b_a.transpose() * &offset))).unwrap();
    let xi = b_a * &a + &offset;
    MOVOrbit {
        orbit: OrbitAtEpoch::new(Vector4::from_column_slice(a.as_slice()), rho.x, rho.y, 60_000.0).unwrap(),
        q: xi.norm_squared() / xi.len() as f64,
        chi: Some(0.0),
        c_a: Matrix4::from_fn(|i, j| normal[(i, j)]),
        b_a: b_a.clone(),
        b_rho: b_rho.clone(),
        xi,
        converged: true,
        iterations: 1,
        stationarity: 0.0,
        level: 0,
        index: None,
        diagnostic: None,
    }
}

/// On a linear model the conditional density of A given ρ is the exact
/// flat-prior posterior, normalized here by brute force on a 4-d grid.
#[test]
fn conditional_attributable_is_the_linear_posterior() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let m = 10;
    // shift the minimizer to a valid attributable
    let anchor = Vector4::new(1.0, 0.3, 0.02, -0.01);
    for _ in 0..2 {
        let b_a = gaussian_matrix(&mut rng, m, 4, 100.0);
        let b_rho = gaussian_matrix(&mut rng, m, 2, 1.0);
        let c = gaussian_matrix(&mut rng, m, 1, 1.0).column(0).into_owned() - &b_a * DVector::from_column_slice(anchor.as_slice());
        let rho = Vector2::new(0.4, 0.003);
        let mov = linear_mov(&b_a, &b_rho, &c, rho);
        let g = conditional_attributable(&mov).unwrap();
        let offset = &b_rho * DVector::from_column_slice(rho.as_slice()) + &c;

        let cov = g.covariance().unwrap();
        let nodes = 41;
        let half: Vec<f64> = (0..4).map(|k| 8.0 * cov[(k, k)].sqrt()).collect();
        let step: Vec<f64> = half.iter().map(|h| 2.0 * h / (nodes - 1) as f64).collect();
        let point = |idx: [usize; 4]| DVector::from_fn(4, |k, _| g.mean[k] - half[k] + idx[k] as f64 * step[k]);
        let unnormalized = |x: &DVector<f64>| (-0.5 * (&b_a * x + &offset).norm_squared() + 0.5 * mov.xi.norm_squared()).exp();
        let mut total = 0.0;
        for i in 0..nodes {
            for j in 0..nodes {
                for k in 0..nodes {
                    for l in 0..nodes {
                        total += unnormalized(&point([i, j, k, l]));
                    }
                }
            }
        }
        let volume: f64 = step.iter().product();
        let z = total * volume;
        let peak = g.density(&g.mean);
        let mut worst = 0.0f64;
        for _ in 0..2000 {
            let idx = [0; 4].map(|_| rng.gen_range(0..nodes));
            let x = point(idx);
            worst = worst.max((g.density(&x) - unnormalized(&x) / z).abs() / peak);
        }
        assert!(worst < 1e-6, "relative sup-norm difference {worst:e}");
    }
}

fn sample(chi: f64, det: f64, cell: f64, mov: &MOVOrbit) -> WeightedSample {
    let mut m = mov.clone();
    m.chi = Some(chi);
    WeightedSample::new(
        SamplePoint {
            s: Vector2::new(0.4, 0.0),
            rho: Vector2::new(0.4, 0.0),
            det_jacobian: det,
            cell_measure: cell,
            in_ar: true,
            index: (0, 0),
        },
        m,
    )
}

fn fixed_mov() -> MOVOrbit {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let b_a = gaussian_matrix(&mut rng, 8, 4, 50.0);
    let b_rho = gaussian_matrix(&mut rng, 8, 2, 1.0);
    let c = DVector::zeros(8) - &b_a * DVector::from_column_slice(&[1.0, 0.3, 0.02, -0.01]);
    linear_mov(&b_a, &b_rho, &c, Vector2::new(0.4, 0.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn gramian_is_the_singular_value_product(entries in prop::collection::vec(-5.0f64..5.0, 8)) {
        let m = Matrix4x2::from_column_slice(&entries);
        let g = gramian_mu(&m);
        let sv = m.svd(false, false).singular_values;
        let oracle: f64 = sv.iter().map(|s| 1.0 + s * s).product();
        prop_assert!(g >= 1.0 - 1e-12);
        prop_assert!((g - oracle).abs() <= 1e-10 * oracle);
    }

    #[test]
    fn schur_complement_is_inverse_marginal(entries in prop::collection::vec(-3.0f64..3.0, 36), ridge in 0.01f64..1.0) {
        let g = Matrix6::from_column_slice(&entries);
        let c = g * g.transpose() + Matrix6::identity() * ridge;
        let a = schur_rho(&c).unwrap();
        let b = gamma_rho_inverse(&c).unwrap();
        prop_assert!((a - b).norm() <= 1e-10 * b.norm());
    }

    #[test]
    fn weights_sum_to_one_and_follow_the_cut(
        raw in prop::collection::vec((0.0f64..8.0, 0.1f64..10.0, 0.01f64..2.0, any::<bool>()), 1..40),
    ) {
        let mov = fixed_mov();
        let mut samples: Vec<WeightedSample> = raw.iter().map(|&(chi, det, cell, _)| sample(chi, det, cell, &mov)).collect();
        for (s, &(_, _, _, hit)) in samples.iter_mut().zip(&raw) {
            s.impact = hit;
        }
        let any_retained = raw.iter().any(|r| r.0 < 5.0);
        let result = sample_weights(&mut samples, 5.0);
        prop_assert_eq!(result.is_ok(), any_retained);
        if any_retained {
            let total: f64 = samples.iter().map(|s| s.weight).sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
            for s in &samples {
                prop_assert_eq!(s.weight > 0.0, s.mov.chi.unwrap() < 5.0);
            }
            let ip = impact_probability(&samples);
            prop_assert!((0.0..=1.0).contains(&ip));
            jeffreys_weights(&mut samples, 5.0).unwrap();
            let total: f64 = samples.iter().map(|s| s.jeffreys_weight).sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
        }
    }
}
