//! Physical constants and unit conversions.
//!
//! Units used throughout the crate: astronomical units, days (MJD TDB),
//! radians. Gravitational parameters are in au³/day².

use std::f64::consts::PI;

/// Gaussian gravitational constant.
pub const GAUSS_K: f64 = 0.017_202_098_95;

/// Heliocentric gravitational parameter k² [au³/day²].
pub const GM_SUN: f64 = GAUSS_K * GAUSS_K;

/// Kilometres per astronomical unit.
pub const AU_KM: f64 = 149_597_870.7;

/// Equatorial Earth radius [au].
pub const EARTH_RADIUS_AU: f64 = 6378.137 / AU_KM;

/// Speed of light [au/day].
pub const SPEED_OF_LIGHT: f64 = 299_792.458 * SECONDS_PER_DAY / AU_KM;

pub const SECONDS_PER_DAY: f64 = 86_400.0;

/// One arcsecond in radians.
pub const ARCSEC: f64 = PI / 648_000.0;

/// Mean obliquity of the ecliptic at J2000 [rad].
pub const OBLIQUITY_J2000: f64 = 84_381.448 * ARCSEC;

/// MJD of the J2000 epoch (2000-01-01 12:00 TDB).
pub const MJD_J2000: f64 = 51_544.5;

/// Earth rotation rate with respect to the stars [rad/day].
pub const EARTH_ROTATION_RATE: f64 = 2.0 * PI * 1.002_737_811_911_354_5;

/// Sun / (Earth + Moon) mass ratio.
pub const SUN_OVER_EMB: f64 = 328_900.56;

/// Geocentric (Earth–Moon system) gravitational parameter [au³/day²].
pub const GM_EARTH: f64 = GM_SUN / SUN_OVER_EMB;

/// Radius of the sphere inside which Earth-bound orbits are excluded from
/// the admissible region [au].
pub const EARTH_SOI_AU: f64 = 0.03;

/// Solar radius [au]; states closer to the Sun are rejected.
pub const SUN_RADIUS_AU: f64 = 696_000.0 / AU_KM;

/// Wrap an angle into `[0, 2π)`.
pub fn wrap_two_pi(angle: f64) -> f64 {
    let a = angle.rem_euclid(2.0 * PI);
    // rem_euclid can round up to exactly 2π for tiny negative inputs
    if a >= 2.0 * PI {
        0.0
    } else {
        a
    }
}

/// Wrap an angle difference into `(-π, π]`.
pub fn wrap_pi(angle: f64) -> f64 {
    let a = wrap_two_pi(angle);
    if a > PI {
        a - 2.0 * PI
    } else {
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn light_speed_in_au_per_day() {
        assert!((SPEED_OF_LIGHT - 173.144_632_674_240_3).abs() < 1e-9);
    }

    #[test]
    fn wraps() {
        assert_eq!(wrap_two_pi(-1e-20), 0.0);
        assert!((wrap_two_pi(-0.5) - (2.0 * PI - 0.5)).abs() < 1e-15);
        assert!((wrap_pi(2.0 * PI - 0.1) + 0.1).abs() < 1e-15);
        assert!((wrap_pi(PI) - PI).abs() < 1e-15);
    }
}
