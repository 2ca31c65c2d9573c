mod common;

use nalgebra::{Vector2, Vector4};

use shortarc::config::Config;
use shortarc::constants::ARCSEC;
use shortarc::mov::{assign_chi, doubly_constrained_corrections_at_level, FitConfig, OrbitAtEpoch};
use shortarc::obs::{parse_mpc_text, ObservatoryTable};
use shortarc::pipeline::{find_nominal, fit_points, prepare, Prepared};
use shortarc::probability::da_drho;
use shortarc::propagation::Propagator;
use shortarc::sampling::{make_cobweb, CobwebParams, SamplingConfig};
use shortarc::scenario::{grazer_spec, main_belt_spec, Scenario, ScenarioSpec};

fn prepared(spec: &ScenarioSpec) -> (Prepared, Scenario) {
    let sc = common::scenario(spec);
    let p = prepare(sc.observations.clone(), &ObservatoryTable::default(), &Config::default()).unwrap();
    (p, sc)
}

fn noiseless(mut spec: ScenarioSpec) -> ScenarioSpec {
    spec.sigma_arcsec = Some(spec.noise_arcsec);
    spec.noise_arcsec = 0.0;
    spec
}

/// Nelder–Mead on `f` from `x0` with initial edge `edge`, restarted from
/// its own result until a restart no longer improves.
fn nelder_mead<F: Fn(&[f64; 4]) -> f64>(f: F, x0: [f64; 4], edge: f64) -> [f64; 4] {
    let mut best = x0;
    let mut best_f = f(&best);
    let mut size = edge;
    for _restart in 0..40 {
        let mut simplex: Vec<([f64; 4], f64)> = (0..5)
            .map(|k| {
                let mut x = best;
                if k > 0 {
                    x[k - 1] += size;
                }
                (x, f(&x))
            })
            .collect();
        for _ in 0..20_000 {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let spread = simplex[4].1 - simplex[0].1;
            let diameter = simplex[1..]
                .iter()
                .map(|(x, _)| (0..4).map(|i| (x[i] - simplex[0].0[i]).abs()).fold(0.0, f64::max))
                .fold(0.0, f64::max);
            if spread <= 1e-15 * simplex[0].1.max(1e-300) && diameter < 1e-10 {
                break;
            }
            let mut centroid = [0.0; 4];
            for (x, _) in &simplex[..4] {
                for i in 0..4 {
                    centroid[i] += x[i] / 4.0;
                }
            }
            let along = |t: f64| {
                let mut y = [0.0; 4];
                for i in 0..4 {
                    y[i] = centroid[i] + t * (simplex[4].0[i] - centroid[i]);
                }
                y
            };
            let xr = along(-1.0);
            let fr = f(&xr);
            if fr < simplex[0].1 {
                let xe = along(-2.0);
                let fe = f(&xe);
                simplex[4] = if fe < fr { (xe, fe) } else { (xr, fr) };
            } else if fr < simplex[3].1 {
                simplex[4] = (xr, fr);
            } else {
                let xc = if fr < simplex[4].1 { along(-0.5) } else { along(0.5) };
                let fc = f(&xc);
                if fc < simplex[4].1.min(fr) {
                    simplex[4] = (xc, fc);
                } else {
                    let x0 = simplex[0].0;
                    for v in simplex.iter_mut().skip(1) {
                        for i in 0..4 {
                            v.0[i] = x0[i] + 0.5 * (v.0[i] - x0[i]);
                        }
                        v.1 = f(&v.0);
                    }
                }
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let improved = simplex[0].1 < best_f;
        if improved {
            best = simplex[0].0;
            best_f = simplex[0].1;
        }
        if !improved && size < 1e-6 {
            break;
        }
        size = (size * 0.1).max(1e-7);
    }
    best
}

#[test]
fn doubly_constrained_fit_matches_an_independent_minimizer() {
    let prop = Propagator::default();
    for spec in [main_belt_spec(8, 0.5, &prop), grazer_spec(8, &prop).unwrap()] {
        let (p, sc) = prepared(&spec);
        let model = &p.model;
        let truth = model.orbit_of(&sc.truth.state).unwrap();
        let rho0 = Vector2::new(truth.rho * 1.05, truth.rho_dot);
        let a0 = p.attributable.vector();
        let start = OrbitAtEpoch::new(a0, rho0.x, rho0.y, model.epoch()).unwrap();
        let level = model.level_for(&start);
        let fit = doubly_constrained_corrections_at_level(&a0, &rho0, model, level, &FitConfig::default(), None).unwrap();
        assert!(fit.converged, "{:?}", fit.diagnostic);

        // minimize ξᵀξ over A in units of the attributable's formal sigmas
        let sigma = Vector4::from_fn(|i, _| p.attributable.covariance[(i, i)].sqrt());
        let objective = |x: &[f64; 4]| {
            let a = a0 + Vector4::from_fn(|i, _| x[i] * sigma[i]);
            match OrbitAtEpoch::new(a, rho0.x, rho0.y, model.epoch()).and_then(|o| model.residuals(&o, level)) {
                Ok(xi) => xi.norm_squared(),
                Err(_) => f64::INFINITY,
            }
        };
        let x = nelder_mead(objective, [0.0; 4], 1.0);
        let a_nm = a0 + Vector4::from_fn(|i, _| x[i] * sigma[i]);
        let a_gn = fit.orbit.attributable;
        for i in 0..4 {
            let d = a_nm[i] - a_gn[i];
            assert!(d.abs() <= 1e-6, "{}: component {i} differs by {d:e}", spec.name);
            assert!(d.abs() <= 1e-3 * sigma[i], "{}: component {i} differs by {:.2e} σ", spec.name, d / sigma[i]);
        }
        let (q_gn, q_nm) = (fit.q * model.m() as f64, objective(&x));
        assert!(q_gn <= q_nm * (1.0 + 1e-9), "{}: Gauss–Newton χ² {q_gn} vs Nelder–Mead {q_nm}", spec.name);
    }
}

#[test]
fn noise_free_arc_fits_truth() {
    let prop = Propagator::default();
    let (p, sc) = prepared(&noiseless(grazer_spec(2, &prop).unwrap()));
    let truth = p.model.orbit_of(&sc.truth.state).unwrap();
    let xi = p.model.residuals(&truth, p.model.level_for(&truth)).unwrap();
    assert!(xi.amax() < 1e-8, "{:e}", xi.amax());
}

/// Where the residuals vanish the linear formula for ∂A*/∂ρ is exact, so
/// it agrees with re-fitted central differences.
#[test]
fn range_derivative_matches_refits_at_zero_residual() {
    let prop = Propagator::default();
    let cfg = FitConfig::default();
    // for the distant object a 1e-8 au/day re-fit difference is at the
    // roundoff of A*, so its range-rate step is larger
    let cases = [
        (noiseless(grazer_spec(3, &prop).unwrap()), 1e-8),
        (noiseless(main_belt_spec(3, 0.5, &prop)), 1e-6),
    ];
    for (spec, h_rate) in cases {
        let (p, sc) = prepared(&spec);
        let model = &p.model;
        let truth = model.orbit_of(&sc.truth.state).unwrap();
        let level = model.level_for(&truth);
        let fit = doubly_constrained_corrections_at_level(&truth.attributable, &truth.range(), model, level, &cfg, None).unwrap();
        assert!(fit.converged && fit.q < 1e-16, "{}: Q {:e}", spec.name, fit.q);
        let analytic = da_drho(&fit).unwrap();
        let a0 = fit.orbit.attributable;
        let refit = |d: Vector2<f64>| {
            let f = doubly_constrained_corrections_at_level(&a0, &(truth.range() + d), model, level, &cfg, None).unwrap();
            assert!(f.converged);
            f.orbit.attributable
        };
        for (col, d) in [Vector2::new(1e-6, 0.0), Vector2::new(0.0, h_rate)].into_iter().enumerate() {
            let mut diff = refit(d) - refit(-d);
            diff[0] = (diff[0] + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI) - std::f64::consts::PI;
            let h = d.x + d.y;
            for row in 0..4 {
                let numeric = diff[row] / (2.0 * h);
                let rel = (analytic[(row, col)] - numeric).abs() / numeric.abs().max(analytic[(row, col)].abs());
                assert!(rel < 1e-4, "{}: entry ({row}, {col}) relative error {rel:e}", spec.name);
            }
        }
    }
}

#[test]
fn nominal_is_no_worse_than_any_constrained_fit() {
    let prop = Propagator::default();
    let config = Config::default();
    let (p, _) = prepared(&grazer_spec(1, &prop).unwrap());
    let nominal = find_nominal(&p, &config).expect("nominal orbit");
    let params = CobwebParams::from_covariance(&nominal.gamma_rho(), nominal.orbit.range()).unwrap();
    let sampling = SamplingConfig {
        cobweb_n_r: 6,
        cobweb_n_theta: 12,
        cobweb_chi_max: 3.0,
        ..SamplingConfig::default()
    };
    let points = make_cobweb(&params, &p.region, &sampling).unwrap();
    let fits = fit_points(&points, &nominal.orbit.attributable, &p.model, &config.fit);
    let mut movs: Vec<_> = fits.into_iter().map(|f| f.1).filter(|m| m.converged).collect();
    assert!(movs.len() > 60);
    let min_q = movs.iter().map(|m| m.q).fold(f64::INFINITY, f64::min);
    assert!(nominal.q <= min_q + 1e-12, "Q* {} vs min MOV Q {}", nominal.q, min_q);

    let summary = assign_chi(&mut movs, Some(&nominal), p.model.m()).unwrap();
    assert_eq!(summary.q_star, nominal.q);
    for m in &movs {
        let chi = m.chi.unwrap();
        assert!((chi * chi - p.model.m() as f64 * (m.q - nominal.q)).abs() < 1e-9 * chi.max(1.0).powi(2));
    }
}

#[test]
fn mpc_records_round_trip_at_their_precision() {
    let prop = Propagator::default();
    for spec in [grazer_spec(5, &prop).unwrap(), main_belt_spec(5, 0.3, &prop)] {
        let sc = common::scenario(&spec);
        let parsed = parse_mpc_text(&sc.mpc_text).unwrap();
        assert_eq!(parsed.len(), sc.observations.len());
        for (a, b) in parsed.iter().zip(&sc.observations) {
            assert_eq!(a.obs_code, b.obs_code);
            // 1e-6 day, 0.001 s of right ascension, 0.01″ of declination
            assert!((a.epoch - b.epoch).abs() <= 0.5e-6 + 1e-9, "epoch {:e}", a.epoch - b.epoch);
            let dra = (a.ra - b.ra + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI) - std::f64::consts::PI;
            assert!(dra.abs() <= 0.0005 * 15.0 * ARCSEC + 1e-12);
            assert!((a.dec - b.dec).abs() <= 0.005 * ARCSEC + 1e-12);
            match (a.magnitude, b.magnitude) {
                (Some(x), Some(y)) => assert!((x - y).abs() <= 0.005 + 1e-9),
                (x, y) => assert_eq!(x.is_some(), y.is_some()),
            }
        }
    }
}
