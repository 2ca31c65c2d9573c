mod common;

use std::collections::{HashSet, VecDeque};

use shortarc::config::Config;
use shortarc::mov::{assign_chi, MOVOrbit};
use shortarc::obs::ObservatoryTable;
use shortarc::pipeline::{run_hazard_pipeline, PipelineRun, REPORT_SCHEMA};
use shortarc::propagation::Propagator;
use shortarc::sampling::f_sigma_inverse;
use shortarc::scenario::{far_miss_spec, grazer_spec, impactor_spec};

fn run(spec: &shortarc::scenario::ScenarioSpec, config: &Config) -> PipelineRun {
    let obs = common::observations(spec);
    run_hazard_pipeline(obs, &ObservatoryTable::default(), config).unwrap_or_else(|e| panic!("{} failed: {e}", spec.name))
}

fn forced_grid() -> Config {
    let mut config = Config::default();
    config.pipeline.force_grid = true;
    config
}

fn check_counts(run: &PipelineRun) {
    let c = run.report.counts;
    assert!(c.impactors <= c.retained);
    assert!(c.chi_report <= c.retained);
    assert!(c.retained <= c.converged);
    assert!(c.converged <= c.in_region);
    assert!(c.in_region <= c.samples);
    let ip = run.report.impact_probability;
    assert!((0.0..=1.0).contains(&ip));
    assert_eq!(run.report.chi_histogram.iter().sum::<usize>(), c.retained);
    let total: f64 = run.samples.iter().map(|s| s.weight).sum();
    assert!((total - 1.0).abs() < 1e-12);
    assert_eq!(run.report.schema, REPORT_SCHEMA);
}

#[test]
fn certain_impactor() {
    let prop = Propagator::default();
    let run = run(&impactor_spec(1, &prop).unwrap(), &Config::default());
    check_counts(&run);
    let r = &run.report;
    assert!(r.impact_probability > 0.99, "IP {}", r.impact_probability);
    let reliable = r.nominal.as_ref().is_some_and(|n| n.reliable);
    assert_eq!(r.sampling.method, if reliable { "cobweb" } else { "grid" });
    let jeffreys = r.impact_probability_jeffreys.expect("comparison density");
    assert!(jeffreys > 0.9);
    eprintln!("impactor IP {} (Jeffreys form {jeffreys}, difference {:.2e})", r.impact_probability, r.impact_probability - jeffreys);
    assert!(r.encounters.min_miss_distance_au.unwrap() < shortarc::constants::EARTH_RADIUS_AU);
}

#[test]
fn far_miss_has_no_impactors_and_is_reproducible() {
    let prop = Propagator::default();
    let spec = far_miss_spec(1, &prop).unwrap();
    let first = run(&spec, &Config::default());
    check_counts(&first);
    assert_eq!(first.report.impact_probability, 0.0);
    assert_eq!(first.report.counts.impactors, 0);
    let second = run(&spec, &Config::default());
    assert_eq!(first.report.to_json(), second.report.to_json());
    assert_eq!(first.artifacts.weights, second.artifacts.weights);
    assert_eq!(first.artifacts.mov, second.artifacts.mov);
}

#[test]
fn artifacts_are_written() {
    let prop = Propagator::default();
    let run = run(&far_miss_spec(2, &prop).unwrap(), &Config::default());
    let dir = tempfile::tempdir().unwrap();
    run.artifacts.write_to(dir.path()).unwrap();
    for name in ["ar_boundary.csv", "samples.csv", "mov.csv", "weights.csv", "encounters.csv"] {
        let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        assert!(text.lines().count() >= 1, "{name} is empty");
    }
    let report: serde_json::Value = serde_json::from_str(&run.report.to_json()).unwrap();
    assert_eq!(report["chi_tiers"], serde_json::json!([2.0, 5.0]));
}

#[test]
fn too_few_observations_fail_in_ingest() {
    let prop = Propagator::default();
    let mut obs = common::observations(&far_miss_spec(1, &prop).unwrap());
    obs.truncate(1);
    let err = run_hazard_pipeline(obs, &ObservatoryTable::default(), &Config::default()).unwrap_err();
    assert_eq!(err.stage, "ingest");
    let report = shortarc::pipeline::FailureReport::from(&err);
    assert!(!report.diagnostic.is_empty());
}

/// Grid indices of converged fits with χ (assigned within the fits) below `cut`.
fn chi_set(fits: &[(shortarc::sampling::SamplePoint, MOVOrbit)], m: usize, cut: f64, inclusive: bool) -> HashSet<(usize, usize)> {
    let mut movs: Vec<MOVOrbit> = fits.iter().map(|f| f.1.clone()).collect();
    assign_chi(&mut movs, None, m).unwrap();
    fits.iter()
        .zip(&movs)
        .filter(|(_, m)| m.chi.is_some_and(|c| if inclusive { c <= cut } else { c < cut }))
        .map(|(f, _)| f.0.index)
        .collect()
}

fn connected(cells: &HashSet<(usize, usize)>) -> bool {
    let Some(&start) = cells.iter().next() else {
        return false;
    };
    let mut seen = HashSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some((i, j)) = queue.pop_front() {
        let (i, j) = (i as i64, j as i64);
        for (di, dj) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
            let (a, b) = (i + di, j + dj);
            if a < 0 || b < 0 {
                continue;
            }
            let next = (a as usize, b as usize);
            if cells.contains(&next) && seen.insert(next) {
                queue.push_back(next);
            }
        }
    }
    seen.len() == cells.len()
}

#[test]
fn grid_path_refines_around_the_valley() {
    let prop = Propagator::default();
    let run = run(&grazer_spec(1, &prop).unwrap(), &forced_grid());
    check_counts(&run);
    assert_eq!(run.report.sampling.method, "grid");
    assert_eq!(run.grids.len(), 2);
    let m = run.model.m();

    // every first-grid point with χ < 5 lies inside the second box
    let (first, second) = (&run.grids[0], &run.grids[1]);
    let selected = chi_set(&first.fits, m, 5.0, false);
    assert!(!selected.is_empty());
    for (p, _) in first.fits.iter().filter(|f| selected.contains(&f.0.index)) {
        let s = f_sigma_inverse(&p.rho, second.spec.mode, None).unwrap();
        let inside = (second.spec.s1.0..=second.spec.s1.1).contains(&s.x) && (second.spec.s2.0..=second.spec.s2.1).contains(&s.y);
        assert!(inside, "first-grid point {:?} outside the second box", p.index);
    }

    // on the final grid {χ ≤ 2} ⊂ {χ < 5}, nonempty and connected
    let inner = chi_set(&second.fits, m, 2.0, true);
    let outer = chi_set(&second.fits, m, 5.0, false);
    assert!(!inner.is_empty());
    assert!(inner.is_subset(&outer));
    assert!(connected(&inner), "{} cells with χ ≤ 2 are not connected", inner.len());
}
