//! Observatory parallax constants and observer heliocentric states.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::constants::{EARTH_RADIUS_AU, EARTH_ROTATION_RATE, MJD_J2000};
use crate::frames::ecliptic_from_equatorial;
use crate::error::{Error, Result};
use crate::obs::time::tdb_to_utc;
use crate::propagation::ephemeris::Ephemeris;

/// Parallax constants of one site.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observatory {
    /// East longitude [rad].
    pub longitude: f64,
    /// ρ cos φ′ [Earth radii].
    pub rho_cos_phi: f64,
    /// ρ sin φ′ [Earth radii].
    pub rho_sin_phi: f64,
}

/// Map from observatory code to parallax constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservatoryTable {
    sites: BTreeMap<String, Observatory>,
}

impl Default for ObservatoryTable {
    /// A handful of common survey sites plus the geocenter.
    fn default() -> Self {
        let mut table = Self::empty();
        for (code, lon, c, s) in [
            ("568", 204.527_8, 0.941_71, 0.337_25),
            ("F51", 203.744_0, 0.936_35, 0.350_86),
            ("G96", 249.211_2, 0.845_11, 0.533_61),
            ("703", 249.263_6, 0.845_89, 0.532_32),
            ("691", 248.399_64, 0.849_03, 0.527_00),
        ] {
            table.insert(code, lon, c, s).expect("built-in sites are valid");
        }
        table
    }
}

impl ObservatoryTable {
    /// Table containing only the geocenter "500".
    pub fn empty() -> Self {
        let mut sites = BTreeMap::new();
        sites.insert(
            "500".to_string(),
            Observatory {
                longitude: 0.0,
                rho_cos_phi: 0.0,
                rho_sin_phi: 0.0,
            },
        );
        Self { sites }
    }

    pub fn insert(&mut self, code: &str, longitude_deg: f64, rho_cos_phi: f64, rho_sin_phi: f64) -> Result<()> {
        if code == "500" && (rho_cos_phi != 0.0 || rho_sin_phi != 0.0) {
            return Err(Error::Range("code 500 is the geocenter".into()));
        }
        if !(rho_cos_phi >= 0.0) || !rho_sin_phi.is_finite() || !longitude_deg.is_finite() {
            return Err(Error::Range(format!("invalid parallax constants for {code}")));
        }
        if rho_cos_phi.hypot(rho_sin_phi) > 1.01 {
            return Err(Error::Range(format!("site {code} lies outside the Earth")));
        }
        self.sites.insert(
            code.to_string(),
            Observatory {
                longitude: longitude_deg.to_radians(),
                rho_cos_phi,
                rho_sin_phi,
            },
        );
        Ok(())
    }

    pub fn get(&self, code: &str) -> Result<&Observatory> {
        self.sites
            .get(code)
            .ok_or_else(|| Error::UnknownObservatory(code.to_string()))
    }

    pub fn codes(&self) -> impl Iterator<Item = &str> {
        self.sites.keys().map(String::as_str)
    }

    /// Parse `code longitude_deg rho_cos_phi rho_sin_phi` lines and add them
    /// to the built-in geocenter entry.
    pub fn parse(text: &str) -> Result<Self> {
        let mut table = Self::empty();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 4 {
                return Err(Error::Config(format!("observatory line {line:?}: expected 4 fields")));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad number {s:?} in observatory line {line:?}")))
            };
            table.insert(f[0], num(f[1])?, num(f[2])?, num(f[3])?)?;
        }
        Ok(table)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Copy of `self` with the entries of `other` added or replaced.
    pub fn merged(&self, other: &ObservatoryTable) -> Self {
        let mut sites = self.sites.clone();
        sites.extend(other.sites.iter().map(|(k, v)| (k.clone(), *v)));
        Self { sites }
    }
}

/// Greenwich mean sidereal angle from a linear Earth-rotation model [rad].
pub fn sidereal_angle(mjd_ut: f64) -> f64 {
    let d = mjd_ut - MJD_J2000;
    crate::constants::wrap_two_pi(2.0 * std::f64::consts::PI * 0.779_057_273_264 + EARTH_ROTATION_RATE * d)
}

/// Geocentric site position and velocity, ecliptic J2000 [au, au/day].
pub fn site_offset(site: &Observatory, epoch: f64) -> (Vector3<f64>, Vector3<f64>) {
    if site.rho_cos_phi == 0.0 && site.rho_sin_phi == 0.0 {
        return (Vector3::zeros(), Vector3::zeros());
    }
    let theta = sidereal_angle(tdb_to_utc(epoch)) + site.longitude;
    let (s, c) = theta.sin_cos();
    let pc = site.rho_cos_phi * EARTH_RADIUS_AU;
    let ps = site.rho_sin_phi * EARTH_RADIUS_AU;
    let pos = Vector3::new(pc * c, pc * s, ps);
    let vel = Vector3::new(-pc * s, pc * c, 0.0) * EARTH_ROTATION_RATE;
    (ecliptic_from_equatorial(&pos), ecliptic_from_equatorial(&vel))
}

/// Geocentric ecliptic state of the observer at `obs_code`.
pub fn observer_geocentric_state(obs_code: &str, epoch: f64, table: &ObservatoryTable) -> Result<(Vector3<f64>, Vector3<f64>)> {
    Ok(site_offset(table.get(obs_code)?, epoch))
}

/// Heliocentric ecliptic state of the observer at `obs_code`.
pub fn observer_heliocentric_state(
    obs_code: &str,
    epoch: f64,
    table: &ObservatoryTable,
    eph: &Ephemeris,
) -> Result<(Vector3<f64>, Vector3<f64>)> {
    let site = table.get(obs_code)?;
    let (re, ve) = eph.earth_state(epoch);
    let (dr, dv) = site_offset(site, epoch);
    Ok((re + dr, ve + dv))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geocenter_is_earth() {
        let eph = Ephemeris::default();
        let table = ObservatoryTable::default();
        let (r, v) = observer_heliocentric_state("500", 60_300.3, &table, &eph).unwrap();
        let (re, ve) = eph.earth_state(60_300.3);
        assert_eq!(r, re);
        assert_eq!(v, ve);
    }

    #[test]
    fn offsets_bounded_by_earth_radius() {
        let eph = Ephemeris::default();
        let table = ObservatoryTable::default();
        for code in ["568", "F51", "G96", "703", "691"] {
            for k in 0..20 {
                let t = 60_300.0 + 0.137 * k as f64;
                let (r, _) = observer_heliocentric_state(code, t, &table, &eph).unwrap();
                assert!((r - eph.earth_state(t).0).norm() <= 4.3e-5);
            }
        }
    }

    #[test]
    fn half_sidereal_day_flips_equatorial_offset() {
        let site = *ObservatoryTable::default().get("568").unwrap();
        let t0 = 60_300.2;
        let half = std::f64::consts::PI / EARTH_ROTATION_RATE;
        let a = crate::frames::equatorial_from_ecliptic(&site_offset(&site, t0).0);
        let b = crate::frames::equatorial_from_ecliptic(&site_offset(&site, t0 + half).0);
        let (ea, eb) = (Vector3::new(a.x, a.y, 0.0), Vector3::new(b.x, b.y, 0.0));
        let cos = ea.dot(&eb) / (ea.norm() * eb.norm());
        assert!(cos < -0.99);
        assert!((ea.norm() / eb.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rotational_velocity_matches_finite_difference() {
        let site = *ObservatoryTable::default().get("G96").unwrap();
        let h = 1e-5;
        let (_, v) = site_offset(&site, 60_300.0);
        let fd = (site_offset(&site, 60_300.0 + h).0 - site_offset(&site, 60_300.0 - h).0) / (2.0 * h);
        assert!((fd - v).norm() < 1e-6 * v.norm());
    }

    #[test]
    fn table_file() {
        let t = ObservatoryTable::parse("# code lon c s\nXYZ 10.0 0.8 0.6\n").unwrap();
        assert!(t.get("XYZ").is_ok());
        assert!(t.get("500").is_ok());
        assert!(matches!(t.get("F51"), Err(Error::UnknownObservatory(_))));
        assert!(ObservatoryTable::parse("XYZ 10.0 -0.8 0.6").is_err());
        assert!(ObservatoryTable::parse("XYZ 10.0 0.8").is_err());
    }
}
