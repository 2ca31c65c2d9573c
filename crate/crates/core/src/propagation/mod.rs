//! Orbit propagation: attributable-coordinate composition, the force model,
//! adaptive integration and close-approach scanning.

pub mod arc;
pub mod encounter;
pub mod ephemeris;
pub mod rkf78;

use nalgebra::{Vector3, Vector4, Vector6};
use serde::{Deserialize, Serialize};

use crate::constants::{GM_SUN, SUN_RADIUS_AU};
use crate::error::{Error, Result};
use crate::frames::{line_of_sight, radec_of};

pub use encounter::{mtp_project, mtp_project_with_pole, scan_close_approaches, EncounterRecord};
pub use ephemeris::{Ephemeris, KeplerElements, Planet};
pub use rkf78::Tolerance;

/// Heliocentric ecliptic J2000 state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub epoch: f64,
}

impl StateVector {
    pub fn new(position: Vector3<f64>, velocity: Vector3<f64>, epoch: f64) -> Result<Self> {
        let s = Self {
            position,
            velocity,
            epoch,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.position.iter().chain(self.velocity.iter()).all(|v| v.is_finite()) && self.epoch.is_finite();
        if !finite {
            return Err(Error::Propagation("non-finite state".into()));
        }
        if self.position.norm() <= SUN_RADIUS_AU {
            return Err(Error::Propagation("state inside the Sun".into()));
        }
        Ok(())
    }

    pub fn as_vector6(&self) -> Vector6<f64> {
        Vector6::new(
            self.position.x,
            self.position.y,
            self.position.z,
            self.velocity.x,
            self.velocity.y,
            self.velocity.z,
        )
    }

    pub fn from_vector6(y: &Vector6<f64>, epoch: f64) -> Self {
        Self {
            position: Vector3::new(y[0], y[1], y[2]),
            velocity: Vector3::new(y[3], y[4], y[5]),
            epoch,
        }
    }

    /// Heliocentric two-body specific energy [au²/day²].
    pub fn energy(&self) -> f64 {
        0.5 * self.velocity.norm_squared() - GM_SUN / self.position.norm()
    }

    pub fn angular_momentum(&self) -> Vector3<f64> {
        self.position.cross(&self.velocity)
    }
}

/// Compose the heliocentric state of the orbit `(A, ρ, ρ̇)` seen from an
/// observer with heliocentric state `(r_obs, v_obs)`.
pub fn attributable_to_state(
    attributable: &Vector4<f64>,
    rho: f64,
    rho_dot: f64,
    observer: &(Vector3<f64>, Vector3<f64>),
    epoch: f64,
) -> StateVector {
    let [u, du_da, du_dd] = line_of_sight(attributable[0], attributable[1]);
    let position = observer.0 + u * rho;
    let velocity = observer.1 + u * rho_dot + (du_da * attributable[2] + du_dd * attributable[3]) * rho;
    StateVector {
        position,
        velocity,
        epoch,
    }
}

/// Inverse of [`attributable_to_state`]: `(A, ρ, ρ̇)` of a heliocentric
/// state as seen by the observer.
pub fn state_to_attributable(
    state: &StateVector,
    observer: &(Vector3<f64>, Vector3<f64>),
) -> Result<(Vector4<f64>, f64, f64)> {
    let d = state.position - observer.0;
    let dv = state.velocity - observer.1;
    let rho = d.norm();
    if rho == 0.0 {
        return Err(Error::Range("object coincides with the observer".into()));
    }
    let (ra, dec) = radec_of(&d);
    let [u, du_da, du_dd] = line_of_sight(ra, dec);
    let cd = dec.cos();
    let rho_dot = dv.dot(&u);
    let ra_dot = dv.dot(&du_da) / (rho * cd * cd);
    let dec_dot = dv.dot(&du_dd) / rho;
    Ok((Vector4::new(ra, dec, ra_dot, dec_dot), rho, rho_dot))
}

/// Point-mass perturbers acting on a massless body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceModel {
    pub perturbers: Vec<Planet>,
}

impl Default for ForceModel {
    fn default() -> Self {
        Self {
            perturbers: vec![Planet::EarthMoon, Planet::Jupiter],
        }
    }
}

impl ForceModel {
    pub fn two_body() -> Self {
        Self { perturbers: vec![] }
    }
}

/// One perturber evaluated at a given time: `(GM, softening radius, position)`.
pub type PerturberPosition = (f64, f64, Vector3<f64>);

/// Heliocentric acceleration given perturber positions.
#[inline]
pub fn acceleration_with(r: &Vector3<f64>, perturbers: &[PerturberPosition]) -> Vector3<f64> {
    let r2 = r.norm_squared();
    let mut a = r * (-GM_SUN / (r2 * r2.sqrt()));
    for (gm, soft, rp) in perturbers {
        let d = rp - r;
        let d2 = d.norm_squared();
        let d3 = (d2 * d2.sqrt()).max(soft * soft * soft);
        let rp2 = rp.norm_squared();
        a += d * (gm / d3) - rp * (gm / (rp2 * rp2.sqrt()));
    }
    a
}

/// Default propagation cap [days].
pub const DEFAULT_MAX_SPAN_DAYS: f64 = 400.0;

/// Ephemeris, force model and integrator settings bundled together.
#[derive(Debug, Clone)]
pub struct Propagator {
    pub eph: Ephemeris,
    pub model: ForceModel,
    pub tolerance: Tolerance,
    pub max_span_days: f64,
}

impl Default for Propagator {
    fn default() -> Self {
        Self::new(Ephemeris::default(), ForceModel::default())
    }
}

impl Propagator {
    pub fn new(eph: Ephemeris, model: ForceModel) -> Self {
        Self {
            eph,
            model,
            tolerance: Tolerance::default(),
            max_span_days: DEFAULT_MAX_SPAN_DAYS,
        }
    }

    pub fn perturber_positions(&self, t: f64, out: &mut Vec<PerturberPosition>) {
        out.clear();
        for &p in &self.model.perturbers {
            if let Some(rp) = self.eph.position(p, t) {
                out.push((p.gm(), p.softening_radius(), rp));
            }
        }
    }

    pub fn acceleration(&self, t: f64, r: &Vector3<f64>) -> Vector3<f64> {
        let mut buf = Vec::with_capacity(self.model.perturbers.len());
        self.perturber_positions(t, &mut buf);
        acceleration_with(r, &buf)
    }

    /// First-order system `ẏ = f(t, y)` for the state vector.
    pub fn derivative(&self, t: f64, y: &Vector6<f64>, buf: &mut Vec<PerturberPosition>) -> Vector6<f64> {
        self.perturber_positions(t, buf);
        let a = acceleration_with(&Vector3::new(y[0], y[1], y[2]), buf);
        Vector6::new(y[3], y[4], y[5], a.x, a.y, a.z)
    }

    fn check_span(&self, state: &StateVector, t_target: f64) -> Result<()> {
        if !((t_target - state.epoch).abs() <= self.max_span_days) {
            return Err(Error::Propagation(format!(
                "propagation span {:.3} days exceeds the {} day cap",
                t_target - state.epoch,
                self.max_span_days
            )));
        }
        state.validate()
    }

    /// Initial step guess from the heliocentric dynamical time scale.
    pub fn initial_step(&self, state: &StateVector) -> f64 {
        let r = state.position.norm();
        let dyn_time = (r * r * r / GM_SUN).sqrt();
        (0.02 * dyn_time).clamp(1e-3, 5.0)
    }

    /// Propagate `state` to `t_target` with the adaptive 7(8) pair.
    pub fn propagate(&self, state: &StateVector, t_target: f64) -> Result<StateVector> {
        self.propagate_observed(state, t_target, |_| true).map(|(s, _)| s)
    }

    /// Propagate while handing every accepted step to `on_step`; returns the
    /// final state and whether the run ended early at the callback's request.
    pub fn propagate_observed<G>(&self, state: &StateVector, t_target: f64, on_step: G) -> Result<(StateVector, bool)>
    where
        G: FnMut(&rkf78::AcceptedStep) -> bool,
    {
        self.check_span(state, t_target)?;
        let mut buf = Vec::with_capacity(self.model.perturbers.len());
        let (t, y) = rkf78::integrate(
            |t, y| self.derivative(t, y, &mut buf),
            state.epoch,
            state.as_vector6(),
            t_target,
            self.initial_step(state),
            &self.tolerance,
            on_step,
        )
        .map_err(Error::Propagation)?;
        let out = StateVector::from_vector6(&y, t);
        out.validate()?;
        Ok((out, t != t_target))
    }

    /// Advance by exactly one 8th-order step of size `h` (no error control).
    pub fn single_step(&self, state: &StateVector, h: f64) -> StateVector {
        let mut buf = Vec::with_capacity(self.model.perturbers.len());
        let (y, _) = rkf78::step(
            |_, t, y| self.derivative(t, y, &mut buf),
            state.epoch,
            &state.as_vector6(),
            h,
        );
        StateVector::from_vector6(&y, state.epoch + h)
    }
}

/// Free-function form of [`Propagator::propagate`] with default tolerances.
pub fn propagate(state: &StateVector, t_target: f64, eph: &Ephemeris, model: &ForceModel) -> Result<StateVector> {
    Propagator::new(eph.clone(), model.clone()).propagate(state, t_target)
}
