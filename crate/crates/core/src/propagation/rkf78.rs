//! Fehlberg 7(8) embedded Runge–Kutta pair, advanced with the 8th-order
//! solution (local extrapolation).

use nalgebra::Vector6;

pub const STAGES: usize = 13;

pub const C: [f64; STAGES] = [
    0.0,
    2.0 / 27.0,
    1.0 / 9.0,
    1.0 / 6.0,
    5.0 / 12.0,
    1.0 / 2.0,
    5.0 / 6.0,
    1.0 / 6.0,
    2.0 / 3.0,
    1.0 / 3.0,
    1.0,
    0.0,
    1.0,
];

#[rustfmt::skip]
pub const A: [[f64; 12]; STAGES] = [
    [0.0; 12],
    [2.0 / 27.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 36.0, 1.0 / 12.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 24.0, 0.0, 1.0 / 8.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [5.0 / 12.0, 0.0, -25.0 / 16.0, 25.0 / 16.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 20.0, 0.0, 0.0, 1.0 / 4.0, 1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [-25.0 / 108.0, 0.0, 0.0, 125.0 / 108.0, -65.0 / 27.0, 125.0 / 54.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [31.0 / 300.0, 0.0, 0.0, 0.0, 61.0 / 225.0, -2.0 / 9.0, 13.0 / 900.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [2.0, 0.0, 0.0, -53.0 / 6.0, 704.0 / 45.0, -107.0 / 9.0, 67.0 / 90.0, 3.0, 0.0, 0.0, 0.0, 0.0],
    [-91.0 / 108.0, 0.0, 0.0, 23.0 / 108.0, -976.0 / 135.0, 311.0 / 54.0, -19.0 / 60.0, 17.0 / 6.0, -1.0 / 12.0, 0.0, 0.0, 0.0],
    [2383.0 / 4100.0, 0.0, 0.0, -341.0 / 164.0, 4496.0 / 1025.0, -301.0 / 82.0, 2133.0 / 4100.0, 45.0 / 82.0, 45.0 / 164.0, 18.0 / 41.0, 0.0, 0.0],
    [3.0 / 205.0, 0.0, 0.0, 0.0, 0.0, -6.0 / 41.0, -3.0 / 205.0, -3.0 / 41.0, 3.0 / 41.0, 6.0 / 41.0, 0.0, 0.0],
    [-1777.0 / 4100.0, 0.0, 0.0, -341.0 / 164.0, 4496.0 / 1025.0, -289.0 / 82.0, 2193.0 / 4100.0, 51.0 / 82.0, 33.0 / 164.0, 12.0 / 41.0, 0.0, 1.0],
];

/// 7th-order weights.
#[rustfmt::skip]
pub const B7: [f64; STAGES] = [
    41.0 / 840.0, 0.0, 0.0, 0.0, 0.0, 34.0 / 105.0, 9.0 / 35.0, 9.0 / 35.0,
    9.0 / 280.0, 9.0 / 280.0, 41.0 / 840.0, 0.0, 0.0,
];

/// 8th-order weights.
#[rustfmt::skip]
pub const B8: [f64; STAGES] = [
    0.0, 0.0, 0.0, 0.0, 0.0, 34.0 / 105.0, 9.0 / 35.0, 9.0 / 35.0,
    9.0 / 280.0, 9.0 / 280.0, 0.0, 41.0 / 840.0, 41.0 / 840.0,
];

/// One step from `(t, y)` with step `h`. The derivative closure receives
/// the stage index so callers can look up precomputed perturber positions.
///
/// Returns the 8th-order solution and the embedded error estimate.
#[inline]
pub fn step<F>(f: F, t: f64, y: &Vector6<f64>, h: f64) -> (Vector6<f64>, Vector6<f64>)
where
    F: FnMut(usize, f64, &Vector6<f64>) -> Vector6<f64>,
{
    let (dy, err) = step_increment(f, t, y, h);
    (y + dy, err)
}

/// Like [`step`] but returns the increment `y₁ − y₀` instead of `y₁`, for
/// callers that accumulate with compensated summation.
#[inline]
pub fn step_increment<F>(mut f: F, t: f64, y: &Vector6<f64>, h: f64) -> (Vector6<f64>, Vector6<f64>)
where
    F: FnMut(usize, f64, &Vector6<f64>) -> Vector6<f64>,
{
    let mut k = [Vector6::<f64>::zeros(); STAGES];
    for s in 0..STAGES {
        let mut ys = *y;
        for (j, kj) in k.iter().enumerate().take(s) {
            let a = A[s][j];
            if a != 0.0 {
                ys += kj * (a * h);
            }
        }
        k[s] = f(s, t + C[s] * h, &ys);
    }
    let mut dy = Vector6::zeros();
    for s in 0..STAGES {
        if B8[s] != 0.0 {
            dy += k[s] * B8[s];
        }
    }
    let err = (k[0] + k[10] - k[11] - k[12]) * (41.0 / 840.0 * h);
    (dy * h, err)
}

/// Step-size control for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub rtol: f64,
    pub atol: f64,
    /// Smallest admissible |h| [days] before declaring step underflow.
    pub h_min: f64,
    /// Largest admissible |h| [days].
    pub h_max: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            rtol: 1e-12,
            atol: 1e-15,
            h_min: 1e-10,
            h_max: 20.0,
        }
    }
}

/// Scaled error norm of a step.
fn error_norm(y0: &Vector6<f64>, y1: &Vector6<f64>, err: &Vector6<f64>, tol: &Tolerance) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..6 {
        let scale = tol.atol + tol.rtol * y0[i].abs().max(y1[i].abs());
        worst = worst.max(err[i].abs() / scale);
    }
    worst
}

/// Outcome of one accepted adaptive step, passed to the observer callback.
#[derive(Debug, Clone, Copy)]
pub struct AcceptedStep {
    pub t0: f64,
    pub y0: Vector6<f64>,
    pub t1: f64,
    pub y1: Vector6<f64>,
}

/// Adaptive integration from `t0` to `t1`.
///
/// `on_step` sees every accepted step and may stop the integration early by
/// returning `false`. Returns the final time and state.
pub fn integrate<F, G>(
    mut f: F,
    t0: f64,
    y0: Vector6<f64>,
    t1: f64,
    h_init: f64,
    tol: &Tolerance,
    mut on_step: G,
) -> Result<(f64, Vector6<f64>), String>
where
    F: FnMut(f64, &Vector6<f64>) -> Vector6<f64>,
    G: FnMut(&AcceptedStep) -> bool,
{
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    let mut t = t0;
    let mut y = y0;
    let mut h = dir * h_init.abs().min(tol.h_max).min((t1 - t0).abs()).max(tol.h_min);
    if t0 == t1 {
        return Ok((t, y));
    }
    loop {
        let remaining = t1 - t;
        let last = h.abs() >= remaining.abs();
        if last {
            h = remaining;
        }
        let (y_new, err) = step(|_, tt, yy| f(tt, yy), t, &y, h);
        if !y_new.iter().all(|v| v.is_finite()) {
            h *= 0.1;
            if h.abs() < tol.h_min {
                return Err(format!("non-finite state near t = {t}"));
            }
            continue;
        }
        let e = error_norm(&y, &y_new, &err, tol);
        if e <= 1.0 {
            let t_new = if last { t1 } else { t + h };
            let accepted = AcceptedStep {
                t0: t,
                y0: y,
                t1: t_new,
                y1: y_new,
            };
            t = t_new;
            y = y_new;
            if !on_step(&accepted) || last {
                return Ok((t, y));
            }
            let factor = if e == 0.0 { 4.0 } else { (0.9 * e.powf(-1.0 / 8.0)).clamp(0.2, 4.0) };
            h = dir * (h.abs() * factor).min(tol.h_max);
        } else {
            let factor = (0.9 * e.powf(-1.0 / 8.0)).clamp(0.1, 0.9);
            h *= factor;
            if h.abs() < tol.h_min {
                return Err(format!("step size underflow at t = {t}"));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tableau_rows_sum_to_nodes() {
        for s in 0..STAGES {
            let sum: f64 = A[s].iter().sum();
            assert!((sum - C[s]).abs() < 1e-14, "row {s}");
        }
        assert!((B7.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((B8.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    /// Quadrature orders: Σ b_i c_i^q = 1/(q+1) for q < order.
    #[test]
    fn quadrature_conditions() {
        for q in 0..8 {
            let s8: f64 = (0..STAGES).map(|i| B8[i] * C[i].powi(q)).sum();
            assert!((s8 - 1.0 / (q as f64 + 1.0)).abs() < 1e-14, "B8 q={q}");
            if q < 7 {
                let s7: f64 = (0..STAGES).map(|i| B7[i] * C[i].powi(q)).sum();
                assert!((s7 - 1.0 / (q as f64 + 1.0)).abs() < 1e-14, "B7 q={q}");
            }
        }
    }

    /// Harmonic oscillator: halving the step reduces the global error by ≈ 2⁸.
    #[test]
    fn eighth_order_convergence() {
        let f = |_: usize, _: f64, y: &Vector6<f64>| Vector6::new(y[3], y[4], y[5], -y[0], -y[1], -y[2]);
        let run = |n: usize| {
            let h = 4.0 / n as f64;
            let mut y = Vector6::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0);
            let mut t = 0.0;
            for _ in 0..n {
                y = step(f, t, &y, h).0;
                t += h;
            }
            ((y[0] - 4f64.cos()).powi(2) + (y[1] - 4f64.sin()).powi(2)).sqrt()
        };
        let (e1, e2) = (run(8), run(16));
        let order = (e1 / e2).log2();
        assert!(order > 7.5, "observed order {order}");
    }

    #[test]
    fn adaptive_hits_target_and_reports_steps() {
        let f = |_: f64, y: &Vector6<f64>| Vector6::new(y[3], y[4], y[5], -y[0], -y[1], -y[2]);
        let mut n = 0;
        let (t, y) = integrate(f, 0.0, Vector6::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0), -10.0, 0.5, &Tolerance::default(), |s| {
            assert!(s.t1 < s.t0);
            n += 1;
            true
        })
        .unwrap();
        assert_eq!(t, -10.0);
        assert!(n > 3);
        assert!((y[0] - 10f64.cos()).abs() < 1e-10);
        assert!((y[1] + 10f64.sin()).abs() < 1e-10);
    }
}
