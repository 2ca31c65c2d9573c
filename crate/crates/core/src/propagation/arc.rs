//! Fast, smooth predictions of the observed angles over a short arc.
//!
//! Residual evaluation is dominated by short propagations from the
//! reference epoch to each observation epoch. Those are done here with a
//! fixed number of 8th-order steps per leg, so the predicted angles are
//! smooth functions of the initial state (finite-difference derivatives
//! stay clean) and the perturber positions at every stage time can be
//! computed once per arc and reused across thousands of orbits.
//!
//! States are carried relative to the Earth, with the step increments
//! accumulated by compensated summation, so that roundoff stays far below
//! the astrometric noise even for objects a few lunar distances away.

use std::sync::OnceLock;

use nalgebra::{Vector3, Vector6};

use crate::constants::{GM_EARTH, SPEED_OF_LIGHT};
use crate::error::{Error, Result};
use crate::frames::radec_of;
use crate::obs::{observer_geocentric_state, Observation, ObservatoryTable};
use crate::propagation::rkf78::{self, STAGES};
use crate::propagation::{acceleration_with, Planet, PerturberPosition, Propagator, StateVector};

/// Largest fixed step used over an arc [days].
pub const ARC_MAX_STEP: f64 = 0.1;

/// Finest refinement level: steps down to `ARC_MAX_STEP / 2^MAX_LEVEL`.
pub const MAX_LEVEL: usize = 16;

#[derive(Debug)]
struct Leg {
    obs_index: usize,
    n_steps: usize,
    h: f64,
    t_start: f64,
    /// Perturber positions, `n_steps * STAGES * n_perturbers` entries.
    stages: Vec<PerturberPosition>,
    /// Earth position and heliocentric acceleration at every stage.
    earth: Vec<(Vector3<f64>, Vector3<f64>)>,
    /// Perturber positions at the observation epoch.
    at_obs: Vec<PerturberPosition>,
    /// Earth state at the observation epoch.
    earth_at_obs: (Vector3<f64>, Vector3<f64>),
}

#[derive(Debug)]
struct Plan {
    forward: Vec<Leg>,
    backward: Vec<Leg>,
}

/// Precomputed geometry for predicting one batch of observations.
#[derive(Debug)]
pub struct ArcContext {
    t_ref: f64,
    epochs: Vec<f64>,
    observers: Vec<(Vector3<f64>, Vector3<f64>)>,
    sites: Vec<(Vector3<f64>, Vector3<f64>)>,
    mu_earth: f64,
    prop: Propagator,
    n_pert: usize,
    plans: Vec<OnceLock<Plan>>,
}

impl ArcContext {
    pub fn new(observations: &[Observation], t_ref: f64, table: &ObservatoryTable, prop: &Propagator) -> Result<Self> {
        let epochs: Vec<f64> = observations.iter().map(|o| o.epoch).collect();
        let sites = observations
            .iter()
            .map(|o| observer_geocentric_state(&o.obs_code, o.epoch, table))
            .collect::<Result<Vec<_>>>()?;
        let observers = epochs
            .iter()
            .zip(&sites)
            .map(|(&t, s)| {
                let (re, ve) = prop.eph.earth_state(t);
                (re + s.0, ve + s.1)
            })
            .collect();
        let mu_earth = prop
            .eph
            .elements()
            .iter()
            .find(|(p, _)| *p == Planet::EarthMoon)
            .map(|(_, el)| el.mu)
            .expect("the ephemeris always includes the Earth");
        Ok(Self {
            t_ref,
            epochs,
            observers,
            sites,
            mu_earth,
            prop: prop.clone(),
            n_pert: prop.model.perturbers.len(),
            plans: (0..=MAX_LEVEL).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn t_ref(&self) -> f64 {
        self.t_ref
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn observer(&self, i: usize) -> &(Vector3<f64>, Vector3<f64>) {
        &self.observers[i]
    }

    /// Geocentric state of the observer of observation `i`.
    pub fn site(&self, i: usize) -> &(Vector3<f64>, Vector3<f64>) {
        &self.sites[i]
    }

    fn earth_at(&self, t: f64) -> (Vector3<f64>, Vector3<f64>) {
        let (re, _) = self.prop.eph.earth_state(t);
        let r = re.norm();
        (re, re * (-self.mu_earth / (r * r * r)))
    }

    pub fn propagator(&self) -> &Propagator {
        &self.prop
    }

    /// Refinement level adequate for `state`, based on how fast its
    /// geocentric geometry changes. Keep it fixed while differentiating.
    pub fn step_level(&self, state: &StateVector) -> usize {
        let (re, ve) = self.prop.eph.earth_state(state.epoch);
        let d = (state.position - re).norm();
        let v = (state.velocity - ve).norm().max(1e-8);
        let geometric = 0.05 * d / v;
        let orbital = 0.05 * (d * d * d / GM_EARTH).sqrt();
        let wanted = geometric.max(orbital).min(ARC_MAX_STEP);
        let mut level = 0;
        while level < MAX_LEVEL && ARC_MAX_STEP / f64::powi(2.0, level as i32) > wanted {
            level += 1;
        }
        level
    }

    fn build_leg(&self, obs_index: usize, t_start: f64, level: usize) -> Leg {
        let t_end = self.epochs[obs_index];
        let h_max = ARC_MAX_STEP / f64::powi(2.0, level as i32);
        let span = t_end - t_start;
        let n_steps = (span.abs() / h_max).ceil() as usize;
        let h = if n_steps == 0 { 0.0 } else { span / n_steps as f64 };
        let mut stages = Vec::with_capacity(n_steps * STAGES * self.n_pert);
        let mut earth = Vec::with_capacity(n_steps * STAGES);
        let mut buf = Vec::with_capacity(self.n_pert);
        for s in 0..n_steps {
            let t0 = t_start + s as f64 * h;
            for c in rkf78::C {
                self.prop.perturber_positions(t0 + c * h, &mut buf);
                stages.extend_from_slice(&buf);
                earth.push(self.earth_at(t0 + c * h));
            }
        }
        self.prop.perturber_positions(t_end, &mut buf);
        Leg {
            obs_index,
            n_steps,
            h,
            t_start,
            stages,
            earth,
            at_obs: buf,
            earth_at_obs: self.prop.eph.earth_state(t_end),
        }
    }

    fn plan(&self, level: usize) -> &Plan {
        self.plans[level.min(MAX_LEVEL)].get_or_init(|| {
            let mut order: Vec<usize> = (0..self.epochs.len()).collect();
            order.sort_by(|&a, &b| self.epochs[a].total_cmp(&self.epochs[b]));
            let mut forward = Vec::new();
            let mut t = self.t_ref;
            for &i in order.iter().filter(|&&i| self.epochs[i] >= self.t_ref) {
                forward.push(self.build_leg(i, t, level));
                t = self.epochs[i];
            }
            let mut backward = Vec::new();
            let mut t = self.t_ref;
            for &i in order.iter().rev().filter(|&&i| self.epochs[i] < self.t_ref) {
                backward.push(self.build_leg(i, t, level));
                t = self.epochs[i];
            }
            Plan { forward, backward }
        })
    }

    /// Advance a geocentric state over one leg. The carry `c` holds the
    /// compensation term of the running sum.
    fn advance(&self, leg: &Leg, y: &mut Vector6<f64>, c: &mut Vector6<f64>) {
        let p = self.n_pert;
        for s in 0..leg.n_steps {
            let base = s * STAGES * p;
            let t0 = leg.t_start + s as f64 * leg.h;
            let (dy, _) = rkf78::step_increment(
                |stage, _, yy| {
                    let pert = &leg.stages[base + stage * p..base + (stage + 1) * p];
                    let (re, ae) = &leg.earth[s * STAGES + stage];
                    let a = acceleration_with(&(re + Vector3::new(yy[0], yy[1], yy[2])), pert) - ae;
                    Vector6::new(yy[3], yy[4], yy[5], a.x, a.y, a.z)
                },
                t0,
                y,
                leg.h,
            );
            let z = dy - *c;
            let sum = *y + z;
            *c = (sum - *y) - z;
            *y = sum;
        }
    }

    /// Light-time corrected topocentric direction of the object given its
    /// geocentric state at the observation epoch. The retarded position
    /// comes from a second-order Taylor expansion, which is far below
    /// astrometric precision for the sub-day light times of interest.
    fn observe(&self, leg: &Leg, y: &Vector6<f64>) -> (f64, f64) {
        let (re, ve) = &leg.earth_at_obs;
        let rg = Vector3::new(y[0], y[1], y[2]);
        let v = Vector3::new(y[3], y[4], y[5]) + ve;
        let a = acceleration_with(&(re + rg), &leg.at_obs);
        let topo = rg - self.sites[leg.obs_index].0;
        let mut tau = topo.norm() / SPEED_OF_LIGHT;
        let mut los = topo;
        for _ in 0..2 {
            los = topo - v * tau + a * (0.5 * tau * tau);
            tau = los.norm() / SPEED_OF_LIGHT;
        }
        radec_of(&los)
    }

    /// Predicted `(α, δ)` for every observation, in input order, from a
    /// heliocentric state at the reference epoch.
    pub fn predict(&self, state: &StateVector, level: usize) -> Result<Vec<(f64, f64)>> {
        if state.epoch != self.t_ref {
            return Err(Error::Contract("arc prediction must start at the reference epoch".into()));
        }
        state.validate()?;
        let (re, ve) = self.prop.eph.earth_state(self.t_ref);
        let y0 = state.as_vector6() - Vector6::new(re.x, re.y, re.z, ve.x, ve.y, ve.z);
        self.predict_geocentric(&y0, level)
    }

    /// As [`ArcContext::predict`], from a geocentric state at the
    /// reference epoch.
    pub fn predict_geocentric(&self, y0: &Vector6<f64>, level: usize) -> Result<Vec<(f64, f64)>> {
        if !y0.iter().all(|v| v.is_finite()) {
            return Err(Error::Range("non-finite initial state".into()));
        }
        let plan = self.plan(level);
        let mut out = vec![(0.0, 0.0); self.epochs.len()];
        for legs in [&plan.forward, &plan.backward] {
            let mut y = *y0;
            let mut c = Vector6::zeros();
            for leg in legs {
                self.advance(leg, &mut y, &mut c);
                if !y.iter().all(|v| v.is_finite()) {
                    return Err(Error::Propagation("non-finite state over the arc".into()));
                }
                out[leg.obs_index] = self.observe(leg, &y);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs_at(epochs: &[f64], code: &str) -> Vec<Observation> {
        epochs
            .iter()
            .map(|&t| Observation::new(t, 0.0, 0.0, code.into(), 1.0, 1.0, None).unwrap())
            .collect()
    }

    #[test]
    fn fixed_step_agrees_with_adaptive_propagation() {
        let prop = Propagator::default();
        let table = ObservatoryTable::default();
        let t_ref = 60_300.0;
        let epochs = [60_299.5, 60_300.2, 60_301.3, 60_302.0];
        let ctx = ArcContext::new(&obs_at(&epochs, "500"), t_ref, &table, &prop).unwrap();
        let state = StateVector::new(Vector3::new(1.3, 0.4, 0.05), Vector3::new(-0.004, 0.014, 0.001), t_ref).unwrap();
        let pred = ctx.predict(&state, 0).unwrap();
        for (i, &t) in epochs.iter().enumerate() {
            // exact light-time solution against the adaptive integrator
            let r_obs = ctx.observer(i).0;
            let mut tau = 0.0;
            let mut los = Vector3::zeros();
            for _ in 0..5 {
                let s = prop.propagate(&state, t - tau).unwrap();
                los = s.position - r_obs;
                tau = los.norm() / SPEED_OF_LIGHT;
            }
            let (ra, dec) = radec_of(&los);
            assert!((ra - pred[i].0).abs() < 1e-11, "ra {i}: {} vs {}", ra, pred[i].0);
            assert!((dec - pred[i].1).abs() < 1e-11, "dec {i}");
        }
    }

    #[test]
    fn level_grows_near_earth() {
        let prop = Propagator::default();
        let table = ObservatoryTable::default();
        let ctx = ArcContext::new(&obs_at(&[60_000.0, 60_000.1, 60_000.2], "500"), 60_000.1, &table, &prop).unwrap();
        let (re, ve) = prop.eph.earth_state(60_000.1);
        let far = StateVector::new(re + Vector3::new(0.3, 0.0, 0.0), ve, 60_000.1).unwrap();
        let near = StateVector::new(re + Vector3::new(1e-4, 0.0, 0.0), ve + Vector3::new(0.0, 0.01, 0.0), 60_000.1).unwrap();
        assert_eq!(ctx.step_level(&far), 0);
        assert!(ctx.step_level(&near) > 3);
    }
}
