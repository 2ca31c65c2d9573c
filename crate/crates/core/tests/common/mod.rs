//! Helpers shared by the integration tests: an independent Kepler
//! propagator and scenario plumbing.
#![allow(dead_code)]

use nalgebra::Vector3;
use shortarc::obs::{Observation, ObservatoryTable};
use shortarc::propagation::Propagator;
use shortarc::scenario::{generate_scenario, Scenario, ScenarioSpec};

/// Stumpff functions C(z), S(z).
fn stumpff(z: f64) -> (f64, f64) {
    if z > 1e-8 {
        let s = z.sqrt();
        ((1.0 - s.cos()) / z, (s - s.sin()) / (s * s * s))
    } else if z < -1e-8 {
        let s = (-z).sqrt();
        ((s.cosh() - 1.0) / (-z), (s.sinh() - s) / (s * s * s))
    } else {
        (0.5 - z / 24.0 + z * z / 720.0, 1.0 / 6.0 - z / 120.0 + z * z / 5040.0)
    }
}

/// Two-body propagation by universal variables (Newton on the universal
/// anomaly, then Lagrange f and g).
pub fn kepler_universal(r0: &Vector3<f64>, v0: &Vector3<f64>, mu: f64, dt: f64) -> (Vector3<f64>, Vector3<f64>) {
    let r0n = r0.norm();
    let vr0 = r0.dot(v0) / r0n;
    let alpha = 2.0 / r0n - v0.norm_squared() / mu;
    let sqmu = mu.sqrt();
    let mut x = sqmu * alpha.abs() * dt;
    for _ in 0..100 {
        let z = alpha * x * x;
        let (c, s) = stumpff(z);
        let f = r0n * vr0 / sqmu * x * x * c + (1.0 - alpha * r0n) * x * x * x * s + r0n * x - sqmu * dt;
        let fp = r0n * vr0 / sqmu * x * (1.0 - alpha * x * x * s) + (1.0 - alpha * r0n) * x * x * c + r0n;
        let dx = f / fp;
        x -= dx;
        if dx.abs() < 1e-15 * x.abs().max(1.0) {
            break;
        }
    }
    let z = alpha * x * x;
    let (c, s) = stumpff(z);
    let f = 1.0 - x * x / r0n * c;
    let g = dt - x * x * x / sqmu * s;
    let r = r0 * f + v0 * g;
    let rn = r.norm();
    let fdot = sqmu / (rn * r0n) * (alpha * x * x * x * s - x);
    let gdot = 1.0 - x * x / rn * c;
    (r, r0 * fdot + v0 * gdot)
}

pub fn scenario(spec: &ScenarioSpec) -> Scenario {
    let prop = Propagator::default();
    generate_scenario(spec, &ObservatoryTable::default(), &prop).expect("scenario generation")
}

pub fn observations(spec: &ScenarioSpec) -> Vec<Observation> {
    scenario(spec).observations
}

#[test]
fn universal_variables_close_a_circular_orbit() {
    let mu = shortarc::constants::GM_SUN;
    let r0 = Vector3::new(1.0, 0.0, 0.0);
    let v0 = Vector3::new(0.0, mu.sqrt(), 0.0);
    let period = 2.0 * std::f64::consts::PI / mu.sqrt();
    let (r, v) = kepler_universal(&r0, &v0, mu, period);
    assert!((r - r0).norm() < 1e-12);
    assert!((v - v0).norm() < 1e-12);
    let (r, _) = kepler_universal(&r0, &v0, mu, period / 4.0);
    assert!((r - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
}
