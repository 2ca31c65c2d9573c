//! Sampling-space point sets and the map `f_σ` from sampling coordinates
//! to `(ρ, ρ̇)`, with its Jacobian determinant.

use std::f64::consts::{LN_10, PI};

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::admissible_region::AdmissibleRegion;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    /// `s = (ρ, ρ̇)`.
    UniformRho,
    /// `s = (log₁₀ ρ, ρ̇)`.
    LogRho,
    /// `s = (r, θ)` on the covariance ellipses of a nominal orbit.
    Cobweb,
}

impl SamplingMode {
    pub fn name(self) -> &'static str {
        match self {
            SamplingMode::UniformRho => "uniform-rho",
            SamplingMode::LogRho => "log-rho",
            SamplingMode::Cobweb => "cobweb",
        }
    }
}

/// Eigen-structure of the `(ρ, ρ̇)` marginal covariance of a nominal orbit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CobwebParams {
    pub lambda1: f64,
    pub lambda2: f64,
    /// Unit eigenvector of `lambda1`.
    pub v1: Vector2<f64>,
    /// `(ρ*, ρ̇*)`.
    pub center: Vector2<f64>,
}

impl CobwebParams {
    pub fn new(lambda1: f64, lambda2: f64, v1: Vector2<f64>, center: Vector2<f64>) -> Result<Self> {
        if !(lambda2 > 0.0) || !(lambda1 >= lambda2) {
            return Err(Error::InvalidCovariance(format!(
                "cobweb eigenvalues must satisfy λ₁ ≥ λ₂ > 0 (got {lambda1}, {lambda2})"
            )));
        }
        Ok(Self {
            lambda1,
            lambda2,
            v1: v1.normalize(),
            center,
        })
    }

    /// Eigen-decomposition of the 2×2 covariance block `Γ_ρρ`.
    pub fn from_covariance(gamma_rr: &Matrix2<f64>, center: Vector2<f64>) -> Result<Self> {
        let (a, b, c) = (gamma_rr[(0, 0)], 0.5 * (gamma_rr[(0, 1)] + gamma_rr[(1, 0)]), gamma_rr[(1, 1)]);
        let mean = 0.5 * (a + c);
        let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
        let (l1, l2) = (mean + rad, mean - rad);
        // eigenvector of the larger eigenvalue, from whichever row is better conditioned
        let v1 = if rad == 0.0 {
            Vector2::new(1.0, 0.0)
        } else if a >= c {
            Vector2::new(l1 - c, b)
        } else {
            Vector2::new(b, l1 - a)
        };
        if !(l2 > 0.0) {
            return Err(Error::InvalidCovariance("Γ_ρρ is not positive definite".into()));
        }
        Self::new(l1, l2, v1, center)
    }

    pub fn v2(&self) -> Vector2<f64> {
        Vector2::new(-self.v1.y, self.v1.x)
    }

    /// Marginal covariance `λ₁ v₁v₁ᵀ + λ₂ v₂v₂ᵀ`.
    pub fn covariance(&self) -> Matrix2<f64> {
        let v2 = self.v2();
        self.v1 * self.v1.transpose() * self.lambda1 + v2 * v2.transpose() * self.lambda2
    }
}

fn need_params(params: Option<&CobwebParams>) -> Result<&CobwebParams> {
    params.ok_or_else(|| Error::Contract("cobweb mode needs cobweb parameters".into()))
}

/// `f_σ`: sampling coordinates → `(ρ, ρ̇)`.
pub fn f_sigma(s: &Vector2<f64>, mode: SamplingMode, params: Option<&CobwebParams>) -> Result<Vector2<f64>> {
    match mode {
        SamplingMode::UniformRho => Ok(*s),
        SamplingMode::LogRho => Ok(Vector2::new(10f64.powf(s.x), s.y)),
        SamplingMode::Cobweb => {
            let p = need_params(params)?;
            let (sin, cos) = s.y.sin_cos();
            Ok(p.center + (p.v1 * (p.lambda1.sqrt() * cos) + p.v2() * (p.lambda2.sqrt() * sin)) * s.x)
        }
    }
}

/// Inverse of [`f_sigma`]; in cobweb mode θ is returned in `[0, 2π)` and
/// the center maps to `r = 0, θ = 0`.
pub fn f_sigma_inverse(rho: &Vector2<f64>, mode: SamplingMode, params: Option<&CobwebParams>) -> Result<Vector2<f64>> {
    match mode {
        SamplingMode::UniformRho => Ok(*rho),
        SamplingMode::LogRho => {
            if !(rho.x > 0.0) {
                return Err(Error::Range("log sampling needs ρ > 0".into()));
            }
            Ok(Vector2::new(rho.x.log10(), rho.y))
        }
        SamplingMode::Cobweb => {
            let p = need_params(params)?;
            let d = rho - p.center;
            let a = d.dot(&p.v1) / p.lambda1.sqrt();
            let b = d.dot(&p.v2()) / p.lambda2.sqrt();
            Ok(Vector2::new(a.hypot(b), crate::constants::wrap_two_pi(b.atan2(a))))
        }
    }
}

/// `|det Df_σ(s)|`.
pub fn det_jacobian_f_sigma(s: &Vector2<f64>, mode: SamplingMode, params: Option<&CobwebParams>) -> Result<f64> {
    match mode {
        SamplingMode::UniformRho => Ok(1.0),
        SamplingMode::LogRho => Ok(LN_10 * 10f64.powf(s.x)),
        SamplingMode::Cobweb => {
            let p = need_params(params)?;
            Ok(s.x.abs() * (p.lambda1 * p.lambda2).sqrt())
        }
    }
}

/// A point of the sampling space with its image in `(ρ, ρ̇)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePoint {
    pub s: Vector2<f64>,
    /// `(ρ, ρ̇)` = `f_σ(s)`.
    pub rho: Vector2<f64>,
    pub det_jacobian: f64,
    /// Quadrature measure of the cell represented by this point in `S`.
    pub cell_measure: f64,
    pub in_ar: bool,
    /// Grid `(i, j)` or web `(k_r, k_θ)` indices.
    pub index: (usize, usize),
}

/// Point-set parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    /// Force a grid mode; `None` chooses from the region's ρ span.
    pub grid_mode: Option<SamplingMode>,
    pub grid_n1: usize,
    pub grid_n2: usize,
    pub cobweb_n_r: usize,
    pub cobweb_n_theta: usize,
    /// Outermost cobweb ring, as a χ level.
    pub cobweb_chi_max: f64,
    /// A region spanning more decades of ρ than this is sampled in log₁₀ρ.
    pub log_decades_threshold: f64,
    /// Cells of margin added around the χ-selected box of the first grid.
    pub refine_margin_cells: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            grid_mode: None,
            grid_n1: 50,
            grid_n2: 50,
            cobweb_n_r: 50,
            cobweb_n_theta: 72,
            cobweb_chi_max: 5.0,
            log_decades_threshold: 1.5,
            refine_margin_cells: 1,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_n1 < 2 || self.grid_n2 < 2 || self.cobweb_n_r < 2 || self.cobweb_n_theta < 2 {
            return Err(Error::Config("sampling resolutions must be at least 2".into()));
        }
        if !(self.cobweb_chi_max > 0.0) {
            return Err(Error::Config("cobweb χ level must be positive".into()));
        }
        if matches!(self.grid_mode, Some(SamplingMode::Cobweb)) {
            return Err(Error::Config("cobweb is not a grid mode".into()));
        }
        Ok(())
    }
}

/// A rectangular grid in sampling coordinates; nodes include both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub mode: SamplingMode,
    pub s1: (f64, f64),
    pub s2: (f64, f64),
    pub n1: usize,
    pub n2: usize,
}

impl GridSpec {
    pub fn new(mode: SamplingMode, s1: (f64, f64), s2: (f64, f64), n1: usize, n2: usize) -> Result<Self> {
        if mode == SamplingMode::Cobweb {
            return Err(Error::Config("cobweb is not a grid mode".into()));
        }
        if n1 < 2 || n2 < 2 {
            return Err(Error::Config("grid resolution must be at least 2".into()));
        }
        if !(s1.0 < s1.1 && s2.0 < s2.1) {
            return Err(Error::Range(format!("grid ranges must be ordered: {s1:?} × {s2:?}")));
        }
        Ok(Self { mode, s1, s2, n1, n2 })
    }

    pub fn step1(&self) -> f64 {
        (self.s1.1 - self.s1.0) / (self.n1 - 1) as f64
    }

    pub fn step2(&self) -> f64 {
        (self.s2.1 - self.s2.0) / (self.n2 - 1) as f64
    }

    pub fn node(&self, i: usize, j: usize) -> Vector2<f64> {
        let x = if i + 1 == self.n1 { self.s1.1 } else { self.s1.0 + i as f64 * self.step1() };
        let y = if j + 1 == self.n2 { self.s2.1 } else { self.s2.0 + j as f64 * self.step2() };
        Vector2::new(x, y)
    }

    pub fn cell_measure(&self) -> f64 {
        self.step1() * self.step2()
    }

    /// Whether `other` lies inside this grid's box.
    pub fn contains_box(&self, other: &GridSpec) -> bool {
        let eps1 = 1e-12 * (self.s1.1 - self.s1.0);
        let eps2 = 1e-12 * (self.s2.1 - self.s2.0);
        other.s1.0 >= self.s1.0 - eps1 && other.s1.1 <= self.s1.1 + eps1 && other.s2.0 >= self.s2.0 - eps2 && other.s2.1 <= self.s2.1 + eps2
    }
}

/// Grid mode for a region: log₁₀ρ when it spans more than the configured
/// number of decades, otherwise uniform ρ.
pub fn choose_grid_mode(ar: &AdmissibleRegion, config: &SamplingConfig) -> Result<SamplingMode> {
    if let Some(mode) = config.grid_mode {
        return Ok(mode);
    }
    let ((lo, hi), _) = ar.bounding_box().ok_or(Error::EmptyRegion)?;
    Ok(if (hi / lo).log10() > config.log_decades_threshold {
        SamplingMode::LogRho
    } else {
        SamplingMode::UniformRho
    })
}

/// Grid covering the bounding box of the admissible region.
pub fn first_grid_spec(ar: &AdmissibleRegion, config: &SamplingConfig) -> Result<GridSpec> {
    let mode = choose_grid_mode(ar, config)?;
    let ((lo, hi), (dlo, dhi)) = ar.bounding_box().ok_or(Error::EmptyRegion)?;
    let s1 = match mode {
        SamplingMode::LogRho => (lo.log10(), hi.log10()),
        _ => (lo, hi),
    };
    GridSpec::new(mode, s1, (dlo, dhi), config.grid_n1, config.grid_n2)
}

/// All nodes of `spec`, flagged against the region.
pub fn make_grid(spec: &GridSpec, ar: &AdmissibleRegion) -> Result<Vec<SamplePoint>> {
    let mut out = Vec::with_capacity(spec.n1 * spec.n2);
    let cell = spec.cell_measure();
    for i in 0..spec.n1 {
        for j in 0..spec.n2 {
            let s = spec.node(i, j);
            let rho = f_sigma(&s, spec.mode, None)?;
            out.push(SamplePoint {
                s,
                rho,
                det_jacobian: det_jacobian_f_sigma(&s, spec.mode, None)?,
                cell_measure: cell,
                in_ar: ar.contains(rho.x, rho.y),
                index: (i, j),
            });
        }
    }
    Ok(out)
}

/// First-step grid over the whole admissible region.
pub fn make_first_grid(ar: &AdmissibleRegion, config: &SamplingConfig) -> Result<(GridSpec, Vec<SamplePoint>)> {
    if ar.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let spec = first_grid_spec(ar, config)?;
    let pts = make_grid(&spec, ar)?;
    Ok((spec, pts))
}

/// Second-step box: the index bounding box of the points flagged in
/// `selected` (typically converged with χ below the cut), widened by
/// `margin` cells and clipped to the first grid, at the same resolution.
///
/// Returns `None` when nothing is selected.
pub fn refine_grid(first: &GridSpec, selected: &[(usize, usize)], margin: usize) -> Option<GridSpec> {
    if selected.is_empty() {
        return None;
    }
    let i_lo = selected.iter().map(|p| p.0).min()?.saturating_sub(margin);
    let i_hi = (selected.iter().map(|p| p.0).max()? + margin).min(first.n1 - 1);
    let j_lo = selected.iter().map(|p| p.1).min()?.saturating_sub(margin);
    let j_hi = (selected.iter().map(|p| p.1).max()? + margin).min(first.n2 - 1);
    // a single column/row still yields a box of positive size
    let (i_lo, i_hi) = widen(i_lo, i_hi, first.n1);
    let (j_lo, j_hi) = widen(j_lo, j_hi, first.n2);
    let a = first.node(i_lo, j_lo);
    let b = first.node(i_hi, j_hi);
    GridSpec::new(first.mode, (a.x, b.x), (a.y, b.y), first.n1, first.n2).ok()
}

fn widen(lo: usize, hi: usize, n: usize) -> (usize, usize) {
    if lo < hi {
        (lo, hi)
    } else if hi + 1 < n {
        (lo, hi + 1)
    } else {
        (lo - 1, hi)
    }
}

/// Polar sampling on the χ-level ellipses of a nominal orbit.
///
/// Rings sit at `r_k = k · r_max / n_r`, `k = 1..n_r`, angles at
/// `θ_j = 2πj / n_θ`. The cell measure is `Δr Δθ`, halved on the outer
/// ring (trapezoid rule in r; the `r = 0` term vanishes with the Jacobian).
pub fn make_cobweb(params: &CobwebParams, ar: &AdmissibleRegion, config: &SamplingConfig) -> Result<Vec<SamplePoint>> {
    let n_r = config.cobweb_n_r;
    let n_t = config.cobweb_n_theta;
    let dr = config.cobweb_chi_max / n_r as f64;
    let dt = 2.0 * PI / n_t as f64;
    let mut out = Vec::with_capacity(n_r * n_t);
    for k in 1..=n_r {
        for j in 0..n_t {
            let s = Vector2::new(k as f64 * dr, j as f64 * dt);
            let rho = f_sigma(&s, SamplingMode::Cobweb, Some(params))?;
            let weight = if k == n_r { 0.5 } else { 1.0 };
            out.push(SamplePoint {
                s,
                rho,
                det_jacobian: det_jacobian_f_sigma(&s, SamplingMode::Cobweb, Some(params))?,
                cell_measure: dr * dt * weight,
                in_ar: ar.contains(rho.x, rho.y),
                index: (k, j),
            });
        }
    }
    Ok(out)
}

/// CSV rows `i,j,s1,s2,rho,rho_dot,det_jac,in_ar`.
pub fn samples_csv(points: &[SamplePoint]) -> String {
    let mut out = String::from("i,j,s1,s2,rho,rho_dot,det_jac,in_ar\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{}\n",
            p.index.0, p.index.1, p.s.x, p.s.y, p.rho.x, p.rho.y, p.det_jacobian, p.in_ar as u8
        ));
    }
    out
}
