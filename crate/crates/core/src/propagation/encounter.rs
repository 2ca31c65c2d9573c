//! Earth close-approach detection and Modified Target Plane coordinates.

use nalgebra::{Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::constants::EARTH_RADIUS_AU;
use crate::error::{Error, Result};
use crate::propagation::{Propagator, StateVector};

/// Default radius of the detection sphere around the Earth [au].
pub const DEFAULT_DETECTION_RADIUS: f64 = 0.05;

/// Bisection stops when the bracket on the closest-approach time is
/// narrower than this [days].
const TCA_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncounterRecord {
    /// Time of closest approach, MJD TDB.
    pub tca: f64,
    /// Distance from the Earth's center in the Modified Target Plane [au].
    pub miss_distance: f64,
    pub mtp_xi: f64,
    pub mtp_zeta: f64,
    /// Geocentric speed at closest approach [au/day].
    pub v_rel: f64,
    pub impact: bool,
}

/// Target-plane coordinates with the basis anchored on `pole`.
///
/// `e₁` is the unit projection of `pole` onto the plane orthogonal to `w`
/// and `e₂ = ŵ × e₁`. When `pole` is (nearly) parallel to `w` the x-axis
/// is projected instead.
pub fn mtp_project_with_pole(u: &Vector3<f64>, w: &Vector3<f64>, pole: &Vector3<f64>) -> Result<(f64, f64)> {
    let wn = w.norm();
    if !(wn > 0.0) {
        return Err(Error::Range("zero relative velocity".into()));
    }
    let w_hat = w / wn;
    let project = |a: &Vector3<f64>| a - w_hat * a.dot(&w_hat);
    let mut e1 = project(pole);
    if e1.norm() < 1e-12 * pole.norm() {
        e1 = project(&Vector3::x());
    }
    let e1 = e1.normalize();
    let e2 = w_hat.cross(&e1);
    Ok((u.dot(&e1), u.dot(&e2)))
}

/// Modified Target Plane coordinates of the geocentric position `u` for
/// geocentric velocity `w`, using the ecliptic north pole as reference.
pub fn mtp_project(u: &Vector3<f64>, w: &Vector3<f64>) -> Result<(f64, f64)> {
    mtp_project_with_pole(u, w, &Vector3::z())
}

fn relative(prop: &Propagator, t: f64, y: &Vector6<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let (re, ve) = prop.eph.earth_state(t);
    (
        Vector3::new(y[0], y[1], y[2]) - re,
        Vector3::new(y[3], y[4], y[5]) - ve,
    )
}

/// Propagate `state` over `window_days` and report every local minimum of
/// the geocentric distance that falls inside the detection sphere.
///
/// With `stop_at_impact` the scan ends at the first impacting minimum.
pub fn scan_close_approaches_with(
    state: &StateVector,
    window_days: f64,
    prop: &Propagator,
    detection_radius: f64,
    stop_at_impact: bool,
) -> Result<Vec<EncounterRecord>> {
    let mut records = Vec::new();
    let mut failure = None;
    let t_end = state.epoch + window_days;
    prop.propagate_observed(state, t_end, |s| {
        let (u0, w0) = relative(prop, s.t0, &s.y0);
        let (u1, w1) = relative(prop, s.t1, &s.y1);
        let (f0, f1) = (u0.dot(&w0), u1.dot(&w1));
        if !(f0 < 0.0 && f1 >= 0.0) {
            return true;
        }
        // cheap rejection: a near-rectilinear passage cannot get closer than this
        let wmax = w0.norm().max(w1.norm()) * 1.2;
        if 0.5 * (u0.norm() + u1.norm() - wmax * (s.t1 - s.t0).abs()) > detection_radius {
            return true;
        }
        let start = StateVector::from_vector6(&s.y0, s.t0);
        let (mut lo, mut hi) = (s.t0, s.t1);
        while hi - lo > TCA_TOLERANCE {
            let mid = 0.5 * (lo + hi);
            let y = prop.single_step(&start, mid - s.t0).as_vector6();
            let (u, w) = relative(prop, mid, &y);
            if u.dot(&w) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let tca = 0.5 * (lo + hi);
        let y = prop.single_step(&start, tca - s.t0).as_vector6();
        let (u, w) = relative(prop, tca, &y);
        if u.norm() > detection_radius {
            return true;
        }
        match mtp_project(&u, &w) {
            Ok((xi, zeta)) => {
                let miss = xi.hypot(zeta);
                let impact = miss <= EARTH_RADIUS_AU;
                records.push(EncounterRecord {
                    tca,
                    miss_distance: miss,
                    mtp_xi: xi,
                    mtp_zeta: zeta,
                    v_rel: w.norm(),
                    impact,
                });
                !(impact && stop_at_impact)
            }
            Err(e) => {
                failure = Some(e);
                false
            }
        }
    })?;
    match failure {
        Some(e) => Err(e),
        None => Ok(records),
    }
}

/// Close approaches over `window_days` with the default detection sphere.
pub fn scan_close_approaches(state: &StateVector, window_days: f64, prop: &Propagator) -> Result<Vec<EncounterRecord>> {
    scan_close_approaches_with(state, window_days, prop, DEFAULT_DETECTION_RADIUS, false)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn central_hit_projects_to_origin() {
        let (xi, zeta) = mtp_project(&Vector3::zeros(), &Vector3::new(0.01, 0.002, -0.003)).unwrap();
        assert_eq!((xi, zeta), (0.0, 0.0));
    }

    #[test]
    fn orthogonal_offset_keeps_its_length() {
        let w = Vector3::new(0.01, 0.002, -0.003);
        let u = w.cross(&Vector3::new(0.3, -0.1, 0.5)) * 1e-3;
        let (xi, zeta) = mtp_project(&u, &w).unwrap();
        assert!((xi.hypot(zeta) / u.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pole_aligned_velocity_uses_fallback() {
        let (xi, zeta) = mtp_project(&Vector3::new(1e-5, 2e-5, 0.0), &Vector3::new(0.0, 0.0, 0.02)).unwrap();
        assert!((xi - 1e-5).abs() < 1e-18 && (zeta - 2e-5).abs() < 1e-18);
        assert!(mtp_project(&Vector3::x(), &Vector3::zeros()).is_err());
    }

    #[test]
    fn basis_convention() {
        // pole component of u maps to +xi, the ŵ × ẑ direction to +zeta
        let w = Vector3::new(0.02, 0.0, 0.0);
        let (xi, zeta) = mtp_project(&Vector3::new(0.0, 0.0, 3e-5), &w).unwrap();
        assert!((xi - 3e-5).abs() < 1e-20 && zeta.abs() < 1e-20);
        let (xi, zeta) = mtp_project(&Vector3::new(0.0, -2e-5, 0.0), &w).unwrap();
        assert!(xi.abs() < 1e-20 && (zeta - 2e-5).abs() < 1e-20);
    }
}
