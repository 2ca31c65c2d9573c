//! Direction and frame helpers (equatorial ↔ ecliptic J2000).

use nalgebra::Vector3;

use crate::constants::{wrap_two_pi, OBLIQUITY_J2000};

pub fn ecliptic_from_equatorial(v: &Vector3<f64>) -> Vector3<f64> {
    let (s, c) = OBLIQUITY_J2000.sin_cos();
    Vector3::new(v.x, c * v.y + s * v.z, -s * v.y + c * v.z)
}

pub fn equatorial_from_ecliptic(v: &Vector3<f64>) -> Vector3<f64> {
    let (s, c) = OBLIQUITY_J2000.sin_cos();
    Vector3::new(v.x, c * v.y - s * v.z, s * v.y + c * v.z)
}

/// Line-of-sight unit vector and its partials with respect to `(α, δ)`,
/// all expressed in the ecliptic frame.
pub fn line_of_sight(ra: f64, dec: f64) -> [Vector3<f64>; 3] {
    let (sa, ca) = ra.sin_cos();
    let (sd, cd) = dec.sin_cos();
    [
        ecliptic_from_equatorial(&Vector3::new(cd * ca, cd * sa, sd)),
        ecliptic_from_equatorial(&Vector3::new(-cd * sa, cd * ca, 0.0)),
        ecliptic_from_equatorial(&Vector3::new(-sd * ca, -sd * sa, cd)),
    ]
}

/// Right ascension in `[0, 2π)` and declination of an ecliptic vector.
pub fn radec_of(v: &Vector3<f64>) -> (f64, f64) {
    let e = equatorial_from_ecliptic(v);
    let ra = wrap_two_pi(e.y.atan2(e.x));
    let dec = e.z.atan2(e.x.hypot(e.y));
    (ra, dec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        let v = Vector3::new(0.3, -1.2, 0.7);
        assert!((equatorial_from_ecliptic(&ecliptic_from_equatorial(&v)) - v).norm() < 1e-15);
        let (ra, dec) = radec_of(&(line_of_sight(5.5, -0.4)[0] * 3.0));
        assert!((ra - 5.5).abs() < 1e-14 && (dec + 0.4).abs() < 1e-14);
    }

    #[test]
    fn partials_match_finite_differences() {
        let (ra, dec, h) = (1.1, 0.3, 1e-6);
        let [_, da, dd] = line_of_sight(ra, dec);
        let fa = (line_of_sight(ra + h, dec)[0] - line_of_sight(ra - h, dec)[0]) / (2.0 * h);
        let fd = (line_of_sight(ra, dec + h)[0] - line_of_sight(ra, dec - h)[0]) / (2.0 * h);
        assert!((fa - da).norm() < 1e-9 && (fd - dd).norm() < 1e-9);
    }
}
