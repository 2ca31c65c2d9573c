//! Analytic planetary ephemeris from fixed J2000 osculating elements.
//!
//! Positions are heliocentric ecliptic J2000. The elements are the mean
//! J2000 values of the standard low-precision planetary tables; their
//! secular rates are ignored, which is adequate over the short spans this
//! crate integrates.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::constants::{EARTH_RADIUS_AU, GM_SUN, MJD_J2000, SUN_OVER_EMB};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Planet {
    Venus,
    EarthMoon,
    Mars,
    Jupiter,
    Saturn,
}

impl Planet {
    pub const ALL: [Planet; 5] = [
        Planet::Venus,
        Planet::EarthMoon,
        Planet::Mars,
        Planet::Jupiter,
        Planet::Saturn,
    ];

    /// Sun-to-planet mass ratio.
    pub fn sun_mass_ratio(self) -> f64 {
        match self {
            Planet::Venus => 408_523.71,
            Planet::EarthMoon => SUN_OVER_EMB,
            Planet::Mars => 3_098_708.0,
            Planet::Jupiter => 1_047.348_6,
            Planet::Saturn => 3_497.898,
        }
    }

    pub fn gm(self) -> f64 {
        GM_SUN / self.sun_mass_ratio()
    }

    /// Radius inside which the point-mass field is replaced by the
    /// interior field of a uniform sphere.
    pub fn softening_radius(self) -> f64 {
        match self {
            Planet::EarthMoon => EARTH_RADIUS_AU,
            _ => 0.0,
        }
    }

    pub fn elements(self) -> KeplerElements {
        let (a, e, i, l, w, o): (f64, f64, f64, f64, f64, f64) = match self {
            Planet::Venus => (0.723_335_66, 0.006_776_72, 3.394_676_05, 181.979_099_50, 131.602_467_18, 76.679_842_55),
            Planet::EarthMoon => (1.000_002_61, 0.016_711_23, -0.000_015_31, 100.464_571_66, 102.937_681_93, 0.0),
            Planet::Mars => (1.523_710_34, 0.093_394_10, 1.849_691_42, -4.553_432_05, -23.943_629_59, 49.559_538_91),
            Planet::Jupiter => (5.202_887_00, 0.048_386_24, 1.304_396_95, 34.396_440_51, 14.728_479_83, 100.473_909_09),
            Planet::Saturn => (9.536_675_94, 0.053_861_79, 2.485_991_87, 49.954_244_23, 92.598_878_31, 113.662_424_48),
        };
        KeplerElements {
            semi_major_axis: a,
            eccentricity: e,
            inclination: i.to_radians(),
            mean_longitude: l.to_radians(),
            longitude_of_perihelion: w.to_radians(),
            longitude_of_node: o.to_radians(),
            epoch: MJD_J2000,
            mu: GM_SUN + self.gm(),
        }
    }
}

/// Osculating heliocentric elements at `epoch` (angles in radians).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeplerElements {
    pub semi_major_axis: f64,
    pub eccentricity: f64,
    pub inclination: f64,
    pub mean_longitude: f64,
    pub longitude_of_perihelion: f64,
    pub longitude_of_node: f64,
    pub epoch: f64,
    /// Gravitational parameter of the relative two-body motion [au³/day²].
    pub mu: f64,
}

/// Solve Kepler's equation `E − e sin E = M` for elliptic orbits.
pub fn eccentric_anomaly(mean_anomaly: f64, e: f64) -> f64 {
    let m = crate::constants::wrap_pi(mean_anomaly);
    let mut ea = if e < 0.8 { m } else { std::f64::consts::PI.copysign(m) };
    for _ in 0..50 {
        let f = ea - e * ea.sin() - m;
        let d = f / (1.0 - e * ea.cos());
        ea -= d;
        if d.abs() < 1e-15 {
            break;
        }
    }
    ea
}

impl KeplerElements {
    /// Heliocentric state on the fixed conic at MJD TDB `t`.
    pub fn state_at(&self, t: f64) -> (Vector3<f64>, Vector3<f64>) {
        KeplerBody::new(self).state(t)
    }
}

/// Elements prepared for fast repeated evaluation.
#[derive(Debug, Clone)]
struct KeplerBody {
    a: f64,
    e: f64,
    b: f64,
    n: f64,
    m0: f64,
    epoch: f64,
    rot: Matrix3<f64>,
}

impl KeplerBody {
    fn new(el: &KeplerElements) -> Self {
        let a = el.semi_major_axis;
        let e = el.eccentricity;
        let omega = el.longitude_of_perihelion - el.longitude_of_node;
        let (so, co) = el.longitude_of_node.sin_cos();
        let (si, ci) = el.inclination.sin_cos();
        let (sw, cw) = omega.sin_cos();
        let rz_node = Matrix3::new(co, -so, 0.0, so, co, 0.0, 0.0, 0.0, 1.0);
        let rx_inc = Matrix3::new(1.0, 0.0, 0.0, 0.0, ci, -si, 0.0, si, ci);
        let rz_arg = Matrix3::new(cw, -sw, 0.0, sw, cw, 0.0, 0.0, 0.0, 1.0);
        Self {
            a,
            e,
            b: a * (1.0 - e * e).sqrt(),
            n: (el.mu / (a * a * a)).sqrt(),
            m0: el.mean_longitude - el.longitude_of_perihelion,
            epoch: el.epoch,
            rot: rz_node * rx_inc * rz_arg,
        }
    }

    fn state(&self, t: f64) -> (Vector3<f64>, Vector3<f64>) {
        let m = self.m0 + self.n * (t - self.epoch);
        let ea = eccentric_anomaly(m, self.e);
        let (s, c) = ea.sin_cos();
        let edot = self.n / (1.0 - self.e * c);
        let r = Vector3::new(self.a * (c - self.e), self.b * s, 0.0);
        let v = Vector3::new(-self.a * s * edot, self.b * c * edot, 0.0);
        (self.rot * r, self.rot * v)
    }
}

/// Heliocentric planetary states from fixed Keplerian elements.
#[derive(Debug, Clone)]
pub struct Ephemeris {
    elements: Vec<(Planet, KeplerElements)>,
    bodies: Vec<KeplerBody>,
}

impl Default for Ephemeris {
    fn default() -> Self {
        Self::from_elements(Planet::ALL.iter().map(|&p| (p, p.elements())).collect())
            .expect("built-in elements are valid")
    }
}

impl Ephemeris {
    pub fn from_elements(elements: Vec<(Planet, KeplerElements)>) -> crate::Result<Self> {
        for (p, el) in &elements {
            if !(el.semi_major_axis > 0.0 && (0.0..1.0).contains(&el.eccentricity)) {
                return Err(crate::Error::Range(format!("invalid elements for {p:?}")));
            }
        }
        if !elements.iter().any(|(p, _)| *p == Planet::EarthMoon) {
            return Err(crate::Error::Range("the ephemeris must include the Earth".into()));
        }
        let bodies = elements.iter().map(|(_, el)| KeplerBody::new(el)).collect();
        Ok(Self { elements, bodies })
    }

    pub fn elements(&self) -> &[(Planet, KeplerElements)] {
        &self.elements
    }

    fn index(&self, planet: Planet) -> Option<usize> {
        self.elements.iter().position(|(p, _)| *p == planet)
    }

    /// Heliocentric position and velocity of `planet` at MJD TDB `t`.
    pub fn state(&self, planet: Planet, t: f64) -> Option<(Vector3<f64>, Vector3<f64>)> {
        self.index(planet).map(|i| self.bodies[i].state(t))
    }

    pub fn position(&self, planet: Planet, t: f64) -> Option<Vector3<f64>> {
        self.state(planet, t).map(|s| s.0)
    }

    /// Earth–Moon barycenter state, used as the Earth throughout.
    pub fn earth_state(&self, t: f64) -> (Vector3<f64>, Vector3<f64>) {
        self.state(Planet::EarthMoon, t).expect("checked at construction")
    }
}
