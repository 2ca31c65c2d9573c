//! Attributables: angles and angular rates fitted to a very short arc.

use nalgebra::{DMatrix, DVector, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::constants::{wrap_pi, wrap_two_pi};
use crate::error::{Error, Result};
use crate::obs::{Observation, WeightMatrix};

/// `(α, δ, α̇, δ̇)` at `mean_epoch` with its formal covariance.
///
/// Angles in radians, rates in rad/day, epoch MJD TDB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attributable {
    pub alpha: f64,
    pub delta: f64,
    pub alpha_dot: f64,
    pub delta_dot: f64,
    pub mean_epoch: f64,
    pub covariance: Matrix4<f64>,
}

impl Attributable {
    pub fn new(vector: Vector4<f64>, mean_epoch: f64, covariance: Matrix4<f64>) -> Self {
        Self {
            alpha: wrap_two_pi(vector[0]),
            delta: vector[1],
            alpha_dot: vector[2],
            delta_dot: vector[3],
            mean_epoch,
            covariance,
        }
    }

    pub fn vector(&self) -> Vector4<f64> {
        Vector4::new(self.alpha, self.delta, self.alpha_dot, self.delta_dot)
    }

    /// Proper-motion rate `√(α̇² cos²δ + δ̇²)` [rad/day].
    pub fn proper_motion(&self) -> f64 {
        (self.alpha_dot * self.delta.cos()).hypot(self.delta_dot)
    }
}

/// Weighted polynomial least squares: coefficients (lowest degree first)
/// and their covariance `(VᵀWV)⁻¹`.
pub fn weighted_polyfit(t: &[f64], y: &[f64], w: &[f64], degree: usize) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = t.len();
    let p = degree + 1;
    let v = DMatrix::from_fn(n, p, |i, j| t[i].powi(j as i32));
    let mut normal = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);
    for i in 0..n {
        for a in 0..p {
            rhs[a] += w[i] * v[(i, a)] * y[i];
            for b in 0..p {
                normal[(a, b)] += w[i] * v[(i, a)] * v[(i, b)];
            }
        }
    }
    // column scaling keeps the test meaningful for any time unit
    let scale = DVector::from_fn(p, |j, _| normal[(j, j)].sqrt().max(f64::MIN_POSITIVE));
    let scaled = DMatrix::from_fn(p, p, |a, b| normal[(a, b)] / (scale[a] * scale[b]));
    let svd = scaled.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-13 * smax) {
        return Err(Error::RankDeficient("polynomial design is singular (coincident epochs)".into()));
    }
    let chol = scaled
        .cholesky()
        .ok_or_else(|| Error::RankDeficient("normal matrix not positive definite".into()))?;
    let inv_scaled = chol.inverse();
    let cov = DMatrix::from_fn(p, p, |a, b| inv_scaled[(a, b)] / (scale[a] * scale[b]));
    let coef = &cov * rhs;
    Ok((coef, cov))
}

/// Right ascensions made continuous across the 0/2π seam.
pub fn unwrapped_ra(observations: &[Observation]) -> Vec<f64> {
    let mut out = Vec::with_capacity(observations.len());
    for (i, o) in observations.iter().enumerate() {
        if i == 0 {
            out.push(o.ra);
        } else {
            let prev = out[i - 1];
            out.push(prev + wrap_pi(o.ra - prev));
        }
    }
    out
}

fn per_axis_weights(observations: &[Observation], w: &WeightMatrix) -> Result<(Vec<f64>, Vec<f64>)> {
    if w.len() != 2 * observations.len() {
        return Err(Error::Contract(format!(
            "weight matrix has {} entries for {} observations",
            w.len(),
            observations.len()
        )));
    }
    let d = w.diagonal();
    Ok((
        (0..observations.len()).map(|i| d[2 * i]).collect(),
        (0..observations.len()).map(|i| d[2 * i + 1]).collect(),
    ))
}

/// Fit the attributable at the arithmetic mean epoch.
///
/// Degree-2 polynomials in `t − t̄` on `α cos δ̄` and `δ` (degree 1 with
/// exactly two observations). Returns the attributable and the RMS of the
/// normalized fit residuals.
pub fn fit_attributable(observations: &[Observation], w: &WeightMatrix) -> Result<(Attributable, f64)> {
    let n = observations.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("{n} observations; at least 2 needed")));
    }
    let (w_ra, w_dec) = per_axis_weights(observations, w)?;
    let t_mean = observations.iter().map(|o| o.epoch).sum::<f64>() / n as f64;
    let dt: Vec<f64> = observations.iter().map(|o| o.epoch - t_mean).collect();
    if dt.iter().all(|&d| d == dt[0]) {
        return Err(Error::RankDeficient("all epochs are equal".into()));
    }
    let degree = if n == 2 { 1 } else { 2 };
    let dec_ref = observations.iter().map(|o| o.dec).sum::<f64>() / n as f64;
    let cd = dec_ref.cos();
    let ra = unwrapped_ra(observations);
    let x: Vec<f64> = ra.iter().map(|a| a * cd).collect();
    let y: Vec<f64> = observations.iter().map(|o| o.dec).collect();
    let (cx, cov_x) = weighted_polyfit(&dt, &x, &w_ra, degree)?;
    let (cy, cov_y) = weighted_polyfit(&dt, &y, &w_dec, degree)?;

    let mut chi2 = 0.0;
    for i in 0..n {
        let px: f64 = (0..=degree).map(|j| cx[j] * dt[i].powi(j as i32)).sum();
        let py: f64 = (0..=degree).map(|j| cy[j] * dt[i].powi(j as i32)).sum();
        chi2 += w_ra[i] * (x[i] - px).powi(2) + w_dec[i] * (y[i] - py).powi(2);
    }
    let rms = (chi2 / (2 * n) as f64).sqrt();

    let mut cov = Matrix4::zeros();
    // order (α, δ, α̇, δ̇); α-coefficients carry the 1/cos δ̄ factor
    let ia = [0usize, 2];
    let id = [1usize, 3];
    for a in 0..2 {
        for b in 0..2 {
            cov[(ia[a], ia[b])] = cov_x[(a, b)] / (cd * cd);
            cov[(id[a], id[b])] = cov_y[(a, b)];
        }
    }
    let attr = Attributable::new(Vector4::new(cx[0] / cd, cy[0], cx[1] / cd, cy[1]), t_mean, cov);
    Ok((attr, rms))
}

fn gnomonic(center: &Vector3<f64>, e_a: &Vector3<f64>, e_d: &Vector3<f64>, ra: f64, dec: f64) -> Option<(f64, f64)> {
    let u = Vector3::new(dec.cos() * ra.cos(), dec.cos() * ra.sin(), dec.sin());
    let denom = u.dot(center);
    (denom > 1e-6).then(|| (u.dot(e_a) / denom, u.dot(e_d) / denom))
}

/// Signal-to-noise ratio of the sky-path curvature orthogonal to the motion.
///
/// Observations are projected onto the tangent plane at their mean
/// direction; a weighted quadratic in time is fitted to each tangent-plane
/// coordinate and the acceleration component normal to the fitted velocity
/// is compared with its formal standard deviation. Great circles project to
/// straight lines, so the statistic vanishes for unaccelerated sky motion.
/// Returns 0 for fewer than four observations or degenerate geometry.
pub fn curvature_snr(observations: &[Observation], w: &WeightMatrix) -> f64 {
    let n = observations.len();
    if n < 4 {
        return 0.0;
    }
    let Ok((w_ra, w_dec)) = per_axis_weights(observations, w) else {
        return 0.0;
    };
    let mut center = Vector3::zeros();
    for o in observations {
        center += Vector3::new(o.dec.cos() * o.ra.cos(), o.dec.cos() * o.ra.sin(), o.dec.sin());
    }
    if center.norm() < 1e-12 {
        return 0.0;
    }
    let center = center.normalize();
    let (ra0, dec0) = (center.y.atan2(center.x), center.z.asin());
    let e_a = Vector3::new(-ra0.sin(), ra0.cos(), 0.0);
    let e_d = Vector3::new(-dec0.sin() * ra0.cos(), -dec0.sin() * ra0.sin(), dec0.cos());
    let t_mean = observations.iter().map(|o| o.epoch).sum::<f64>() / n as f64;
    let mut t = Vec::with_capacity(n);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for o in observations {
        let Some((x, y)) = gnomonic(&center, &e_a, &e_d, o.ra, o.dec) else {
            return 0.0;
        };
        t.push(o.epoch - t_mean);
        xs.push(x);
        ys.push(y);
    }
    let (Ok((cx, vx)), Ok((cy, vy))) = (weighted_polyfit(&t, &xs, &w_ra, 2), weighted_polyfit(&t, &ys, &w_dec, 2)) else {
        return 0.0;
    };
    let speed = cx[1].hypot(cy[1]);
    if !(speed > 0.0) {
        return 0.0;
    }
    let (ux, uy) = (cx[1] / speed, cy[1] / speed);
    let kappa = 2.0 * (cx[2] * uy - cy[2] * ux);
    let var = 4.0 * (uy * uy * vx[(2, 2)] + ux * ux * vy[(2, 2)]);
    if !(var > 0.0) {
        return 0.0;
    }
    kappa.abs() / var.sqrt()
}
