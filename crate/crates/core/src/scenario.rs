//! Synthetic observation sets generated from a known orbit.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::constants::{wrap_two_pi, ARCSEC, EARTH_RADIUS_AU, GM_SUN};
use crate::error::{Error, Result};
use crate::mov::OrbitAtEpoch;
use crate::obs::{format_mpc80, observer_heliocentric_state, Observation, ObservationBatch, ObservatoryTable};
use crate::propagation::arc::ArcContext;
use crate::propagation::{state_to_attributable, KeplerElements, Propagator, StateVector};

/// Generating orbit, as a state or as osculating heliocentric elements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TruthOrbit {
    State { state: StateVector },
    Elements { elements: KeplerElements },
}

impl TruthOrbit {
    pub fn state(&self) -> StateVector {
        match self {
            TruthOrbit::State { state } => *state,
            TruthOrbit::Elements { elements } => {
                let (r, v) = elements.state_at(elements.epoch);
                StateVector {
                    position: r,
                    velocity: v,
                    epoch: elements.epoch,
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledObservation {
    /// MJD TDB.
    pub epoch: f64,
    pub obs_code: String,
}

/// Everything that defines a synthetic observation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub designation: String,
    pub truth: TruthOrbit,
    pub schedule: Vec<ScheduledObservation>,
    /// Standard deviation of the injected Gaussian noise [arcsec]; the
    /// right-ascension noise is applied to `α cos δ`.
    pub noise_arcsec: f64,
    /// Assumed astrometric sigma attached to each observation [arcsec];
    /// defaults to the noise level, or 1″ without noise.
    #[serde(default)]
    pub sigma_arcsec: Option<f64>,
    /// Absolute magnitude for the synthetic apparent magnitudes.
    #[serde(default)]
    pub absolute_magnitude: Option<f64>,
    pub seed: u64,
}

/// What was used to generate a scenario, for later comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTruth {
    pub name: String,
    /// Truth state at the mean observation epoch.
    pub state: StateVector,
    /// Truth `(A, ρ, ρ̇)` at the mean epoch, seen from the station of the
    /// observation closest to it.
    pub orbit: OrbitAtEpoch,
    pub noise_arcsec: f64,
    pub schedule: Vec<ScheduledObservation>,
    pub seed: u64,
    /// Injected offsets `(Δα cos δ, Δδ)` [arcsec] per observation.
    pub offsets_arcsec: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub truth: ScenarioTruth,
    /// Observations at full precision.
    pub observations: Vec<Observation>,
    /// The same observations as MPC 80-column records.
    pub mpc_text: String,
}

impl Scenario {
    pub fn batch(&self) -> Result<ObservationBatch> {
        ObservationBatch::new(self.observations.clone())
    }
}

/// Propagate the truth, predict light-time corrected topocentric angles at
/// each scheduled epoch, add Gaussian noise and format the records.
pub fn generate_scenario(spec: &ScenarioSpec, table: &ObservatoryTable, prop: &Propagator) -> Result<Scenario> {
    if spec.schedule.len() < 3 {
        return Err(Error::InsufficientData("a scenario needs at least three observations".into()));
    }
    if !(spec.noise_arcsec >= 0.0) {
        return Err(Error::Range("noise sigma must be non-negative".into()));
    }
    let sigma = spec
        .sigma_arcsec
        .unwrap_or(if spec.noise_arcsec > 0.0 { spec.noise_arcsec } else { 1.0 });
    // mean epoch and reference station as the batch will see them
    let placeholder: Vec<Observation> = spec
        .schedule
        .iter()
        .map(|s| Observation::new(s.epoch, 0.0, 0.0, s.obs_code.clone(), sigma, sigma, None))
        .collect::<Result<_>>()?;
    let batch = ObservationBatch::new(placeholder)?;
    let t_mean = batch.mean_epoch();
    let reference = batch.observations()[batch.reference_index()].obs_code.clone();

    let state = prop.propagate(&spec.truth.state(), t_mean)?;
    let ctx = ArcContext::new(batch.observations(), t_mean, table, prop)?;
    let predicted = ctx.predict(&state, ctx.step_level(&state))?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut observations = Vec::with_capacity(predicted.len());
    let mut offsets = Vec::with_capacity(predicted.len());
    for (i, (o, (ra, dec))) in batch.observations().iter().zip(predicted).enumerate() {
        let (dx, dy) = if spec.noise_arcsec > 0.0 {
            (normal.sample(&mut rng) * spec.noise_arcsec, normal.sample(&mut rng) * spec.noise_arcsec)
        } else {
            (0.0, 0.0)
        };
        offsets.push((dx, dy));
        let dec_obs = dec + dy * ARCSEC;
        let ra_obs = wrap_two_pi(ra + dx * ARCSEC / dec.cos());
        let magnitude = match spec.absolute_magnitude {
            Some(h) => {
                let r_obs = ctx.observer(i).0;
                let target = prop.propagate(&state, o.epoch)?.position;
                Some(h + 5.0 * (target.norm() * (target - r_obs).norm()).log10())
            }
            None => None,
        };
        observations.push(Observation::new(o.epoch, ra_obs, dec_obs, o.obs_code.clone(), sigma, sigma, magnitude)?);
    }

    let observer = observer_heliocentric_state(&reference, t_mean, table, &prop.eph)?;
    let (a, rho, rho_dot) = state_to_attributable(&state, &observer)?;
    let mut mpc_text = String::new();
    for o in &observations {
        mpc_text.push_str(&format_mpc80(o, &spec.designation));
        mpc_text.push('\n');
    }
    Ok(Scenario {
        truth: ScenarioTruth {
            name: spec.name.clone(),
            state,
            orbit: OrbitAtEpoch::new(a, rho, rho_dot, t_mean)?,
            noise_arcsec: spec.noise_arcsec,
            schedule: spec.schedule.clone(),
            seed: spec.seed,
            offsets_arcsec: offsets,
        },
        observations,
        mpc_text,
    })
}

/// State at epoch `t_ca` of an object passing Earth's center with
/// geocentric velocity `v_rel`, displaced by `offset` (made orthogonal to
/// `v_rel`). A zero offset gives a central impact.
pub fn encounter_state(prop: &Propagator, t_ca: f64, v_rel: &Vector3<f64>, offset: &Vector3<f64>) -> Result<StateVector> {
    let w = v_rel.normalize();
    let b = offset - w * w.dot(offset);
    let (re, ve) = prop.eph.earth_state(t_ca);
    StateVector::new(re + b, ve + v_rel, t_ca)
}

/// Parameters of the built-in encounter scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncounterGeometry {
    pub t_ca: f64,
    /// Geocentric speed at encounter [au/day].
    pub speed: f64,
    /// Miss distance of the construction [au]; zero for a central impact.
    pub miss: f64,
    /// Observation epochs relative to `t_ca` [days].
    pub offsets: Vec<f64>,
    pub obs_codes: Vec<String>,
}

/// Geocentric approach direction used by the built-in scenarios: mostly
/// sunward, so the object is observed well away from the Sun.
fn approach_velocity(prop: &Propagator, t_ca: f64, speed: f64) -> (Vector3<f64>, Vector3<f64>) {
    let (re, ve) = prop.eph.earth_state(t_ca);
    let radial = re.normalize();
    let along = ve.normalize();
    let dir = (-radial + along * 0.35 + Vector3::z() * 0.25).normalize();
    let side = dir.cross(&Vector3::z()).normalize();
    (dir * speed, side)
}

pub fn encounter_spec(
    name: &str,
    geometry: &EncounterGeometry,
    noise_arcsec: f64,
    absolute_magnitude: f64,
    seed: u64,
    prop: &Propagator,
) -> Result<ScenarioSpec> {
    if geometry.offsets.len() != geometry.obs_codes.len() {
        return Err(Error::Contract("one observatory code per observation offset".into()));
    }
    let (v_rel, side) = approach_velocity(prop, geometry.t_ca, geometry.speed);
    let at_ca = encounter_state(prop, geometry.t_ca, &v_rel, &(side * geometry.miss))?;
    let first = geometry.offsets.iter().cloned().fold(f64::INFINITY, f64::min);
    let start = prop.propagate(&at_ca, geometry.t_ca + first)?;
    Ok(ScenarioSpec {
        name: name.into(),
        designation: name.chars().filter(|c| c.is_ascii_alphanumeric()).take(7).collect(),
        truth: TruthOrbit::State { state: start },
        schedule: geometry
            .offsets
            .iter()
            .zip(&geometry.obs_codes)
            .map(|(dt, code)| ScheduledObservation {
                epoch: geometry.t_ca + dt,
                obs_code: code.clone(),
            })
            .collect(),
        noise_arcsec,
        sigma_arcsec: None,
        absolute_magnitude: Some(absolute_magnitude),
        seed,
    })
}

const SCENARIO_EPOCH: f64 = 60_400.0;

fn codes(n: usize) -> Vec<String> {
    ["F51", "G96", "F51", "703", "F51", "G96"].iter().cycle().take(n).map(|s| s.to_string()).collect()
}

/// Observed over three nights ending ten days before a central impact,
/// with 0.1″ noise.
pub fn impactor_geometry() -> EncounterGeometry {
    let offsets = vec![-13.0, -12.97, -11.5, -10.03, -10.0];
    EncounterGeometry {
        t_ca: SCENARIO_EPOCH,
        speed: 0.01,
        miss: 0.0,
        obs_codes: codes(offsets.len()),
        offsets,
    }
}

/// The impactor schedule for an object passing at 0.8 Earth radii; with
/// 0.5″ noise only part of the uncertainty region hits.
pub fn grazer_geometry() -> EncounterGeometry {
    EncounterGeometry {
        miss: 0.8 * EARTH_RADIUS_AU,
        ..impactor_geometry()
    }
}

/// Passes Earth at 0.2 au.
pub fn far_miss_geometry() -> EncounterGeometry {
    let offsets = vec![-13.0, -12.97, -11.5, -10.03, -10.0];
    EncounterGeometry {
        t_ca: SCENARIO_EPOCH,
        speed: 0.01,
        miss: 0.2,
        obs_codes: codes(offsets.len()),
        offsets,
    }
}

pub fn impactor_spec(seed: u64, prop: &Propagator) -> Result<ScenarioSpec> {
    encounter_spec("impactor", &impactor_geometry(), 0.1, 22.0, seed, prop)
}

pub fn grazer_spec(seed: u64, prop: &Propagator) -> Result<ScenarioSpec> {
    encounter_spec("grazer", &grazer_geometry(), 0.5, 22.0, seed, prop)
}

pub fn far_miss_spec(seed: u64, prop: &Propagator) -> Result<ScenarioSpec> {
    encounter_spec("far-miss", &far_miss_geometry(), 0.1, 22.0, seed, prop)
}

/// A main-belt object near opposition, observed on three nights.
pub fn main_belt_spec(seed: u64, noise_arcsec: f64, prop: &Propagator) -> ScenarioSpec {
    let t0 = SCENARIO_EPOCH;
    let (re, _) = prop.eph.earth_state(t0);
    let lon = re.y.atan2(re.x);
    let elements = KeplerElements {
        semi_major_axis: 2.6,
        eccentricity: 0.12,
        inclination: 0.09,
        mean_longitude: lon + 0.02,
        longitude_of_perihelion: lon + 1.1,
        longitude_of_node: lon - 0.4,
        epoch: t0,
        mu: GM_SUN,
    };
    let offsets = [0.0, 0.03, 1.0, 1.03, 2.0, 2.03];
    ScenarioSpec {
        name: "main-belt".into(),
        designation: "MB00001".into(),
        truth: TruthOrbit::Elements { elements },
        schedule: offsets
            .iter()
            .zip(codes(offsets.len()))
            .map(|(dt, code)| ScheduledObservation {
                epoch: t0 + dt,
                obs_code: code,
            })
            .collect(),
        noise_arcsec,
        sigma_arcsec: None,
        absolute_magnitude: Some(16.0),
        seed,
    }
}
