mod common;

use shortarc::config::Config;
use shortarc::montecarlo::monte_carlo_ip;
use shortarc::obs::ObservatoryTable;
use shortarc::propagation::Propagator;
use shortarc::scenario::{grazer_spec, impactor_spec};

#[test]
fn impactor_chain_hits() {
    let prop = Propagator::default();
    let obs = common::observations(&impactor_spec(1, &prop).unwrap());
    let mc = monte_carlo_ip(obs, 4000, 3, &ObservatoryTable::default(), &Config::default()).unwrap();
    assert!(mc.impact_probability > 0.99, "{mc:?}");
    assert!(mc.n_retained > 0 && mc.n_retained <= 4000);
}

#[test]
fn grazer_chain_is_marginal() {
    let prop = Propagator::default();
    let obs = common::observations(&grazer_spec(1, &prop).unwrap());
    let table = ObservatoryTable::default();
    let mc = monte_carlo_ip(obs.clone(), 6000, 3, &table, &Config::default()).unwrap();
    assert!(mc.impact_probability > 0.0 && mc.impact_probability < 1.0, "{mc:?}");
    assert!(mc.standard_error > 0.0 && mc.standard_error < 0.2);
    assert!((0.1..=0.6).contains(&mc.acceptance) || mc.retuned);
    let again = monte_carlo_ip(obs, 6000, 3, &table, &Config::default()).unwrap();
    assert_eq!(mc, again);
}
