//! Probability densities on the sampling space and the impact probability.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix4x2, Matrix6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mov::{invert_normal, MOVOrbit};
use crate::propagation::EncounterRecord;
use crate::sampling::SamplePoint;

/// `∂A*/∂ρ = −C_A⁻¹ B_Aᵀ B_ρ` from the blocks of a design matrix.
pub fn da_drho_from(b_a: &DMatrix<f64>, b_rho: &DMatrix<f64>) -> Result<Matrix4x2<f64>> {
    if b_a.ncols() != 4 || b_rho.ncols() != 2 || b_a.nrows() != b_rho.nrows() {
        return Err(Error::Contract("design blocks must be m×4 and m×2".into()));
    }
    let c_a = b_a.transpose() * b_a;
    let c_inv = invert_normal(&c_a)?;
    let m = -(c_inv * b_a.transpose() * b_rho);
    Ok(Matrix4x2::from_fn(|i, j| m[(i, j)]))
}

/// `∂A*/∂ρ` at a converged MOV orbit.
pub fn da_drho(mov: &MOVOrbit) -> Result<Matrix4x2<f64>> {
    if !mov.converged {
        return Err(Error::Contract("∂A*/∂ρ needs a converged fit".into()));
    }
    da_drho_from(&mov.b_a, &mov.b_rho)
}

/// `G_μ = det(I₂ + MᵀM)`.
pub fn gramian_mu(m: &Matrix4x2<f64>) -> f64 {
    (Matrix2::identity() + m.transpose() * m).determinant()
}

/// A sample with everything the densities need.
#[derive(Debug, Clone)]
pub struct WeightedSample {
    pub sample: SamplePoint,
    pub mov: MOVOrbit,
    /// `∂A*/∂ρ`; `None` when it could not be evaluated.
    pub da_drho: Option<Matrix4x2<f64>>,
    pub g_mu: f64,
    /// Normalized mass under the MOV density.
    pub weight: f64,
    /// Normalized mass under the Jeffreys-form comparison density.
    pub jeffreys_weight: f64,
    pub impact: bool,
    pub encounters: Vec<EncounterRecord>,
}

impl WeightedSample {
    pub fn new(sample: SamplePoint, mov: MOVOrbit) -> Self {
        let da = if mov.converged { da_drho(&mov).ok() } else { None };
        let g_mu = da.as_ref().map(gramian_mu).unwrap_or(f64::NAN);
        Self {
            sample,
            mov,
            da_drho: da,
            g_mu,
            weight: 0.0,
            jeffreys_weight: 0.0,
            impact: false,
            encounters: Vec::new(),
        }
    }

    /// Converged, χ below the cut and with a usable Gramian.
    pub fn retained(&self, chi_cut: f64) -> bool {
        self.mov.converged && self.mov.chi.is_some_and(|c| c < chi_cut) && self.g_mu.is_finite()
    }

    /// `G_σ = (det Df_σ)²`; the densities use its square root.
    pub fn g_sigma(&self) -> f64 {
        self.sample.det_jacobian * self.sample.det_jacobian
    }
}

fn normalize(raw: Vec<f64>) -> Result<Vec<f64>> {
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::NoConvergedSamples("no retained sample carries probability mass".into()));
    }
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// Weights `∝ exp(−χ²/2) √G_μ √G_σ · cell` over the retained samples,
/// zero elsewhere, summing to one.
pub fn sample_weights(samples: &mut [WeightedSample], chi_cut: f64) -> Result<()> {
    let raw: Vec<f64> = samples
        .iter()
        .map(|s| {
            if s.retained(chi_cut) {
                let chi = s.mov.chi.unwrap_or(f64::INFINITY);
                (-0.5 * chi * chi).exp() * s.g_mu.sqrt() * s.sample.det_jacobian * s.sample.cell_measure
            } else {
                0.0
            }
        })
        .collect();
    for (s, w) in samples.iter_mut().zip(normalize(raw)?) {
        s.weight = w;
    }
    Ok(())
}

/// Sum of the weights of impacting samples.
pub fn impact_probability(samples: &[WeightedSample]) -> f64 {
    samples.iter().filter(|s| s.impact).fold(0.0, |acc, s| acc + s.weight).clamp(0.0, 1.0)
}

/// Same sum under the Jeffreys-form weights.
pub fn jeffreys_impact_probability(samples: &[WeightedSample]) -> f64 {
    samples.iter().filter(|s| s.impact).fold(0.0, |acc, s| acc + s.jeffreys_weight).clamp(0.0, 1.0)
}

/// `C^ρρ = C_ρρ − C_Aρᵀ C_A⁻¹ C_Aρ` for a 6×6 normal matrix ordered `(A, ρ)`.
pub fn schur_rho(c: &Matrix6<f64>) -> Result<Matrix2<f64>> {
    let c_a = DMatrix::from_fn(4, 4, |i, j| c[(i, j)]);
    let c_ar = DMatrix::from_fn(4, 2, |i, j| c[(i, 4 + j)]);
    let c_rr = Matrix2::from_fn(|i, j| c[(4 + i, 4 + j)]);
    let corr = c_ar.transpose() * invert_normal(&c_a)? * &c_ar;
    let s = c_rr - Matrix2::from_fn(|i, j| corr[(i, j)]);
    Ok(0.5 * (s + s.transpose()))
}

/// `(Γ_ρρ)⁻¹` with `Γ = C⁻¹` by full inversion.
pub fn gamma_rho_inverse(c: &Matrix6<f64>) -> Result<Matrix2<f64>> {
    let gamma = invert_normal(&DMatrix::from_fn(6, 6, |i, j| c[(i, j)]))?;
    let g = Matrix2::from_fn(|i, j| gamma[(4 + i, 4 + j)]);
    g.try_inverse().ok_or_else(|| Error::Singular("Γ_ρρ is singular".into()))
}

/// Weights `∝ exp(−χ²/2) √det C^ρρ √G_σ · cell` (comparison density);
/// samples whose `C_A` cannot be inverted get no mass.
pub fn jeffreys_weights(samples: &mut [WeightedSample], chi_cut: f64) -> Result<()> {
    let raw: Vec<f64> = samples
        .iter()
        .map(|s| {
            if !s.retained(chi_cut) {
                return 0.0;
            }
            let chi = s.mov.chi.unwrap_or(f64::INFINITY);
            match schur_rho(&s.mov.full_normal_matrix()) {
                Ok(c) => {
                    let det = c.determinant();
                    if det > 0.0 {
                        (-0.5 * chi * chi).exp() * det.sqrt() * s.sample.det_jacobian * s.sample.cell_measure
                    } else {
                        0.0
                    }
                }
                Err(_) => 0.0,
            }
        })
        .collect();
    for (s, w) in samples.iter_mut().zip(normalize(raw)?) {
        s.jeffreys_weight = w;
    }
    Ok(())
}

/// Gaussian in normal-matrix form `N(mean, normal⁻¹)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalGaussian {
    pub mean: DVector<f64>,
    pub normal_matrix: DMatrix<f64>,
}

impl ConditionalGaussian {
    pub fn new(mean: DVector<f64>, normal_matrix: DMatrix<f64>) -> Result<Self> {
        if normal_matrix.nrows() != mean.len() || normal_matrix.ncols() != mean.len() {
            return Err(Error::Contract("normal matrix and mean dimensions differ".into()));
        }
        let asym = (&normal_matrix - normal_matrix.transpose()).amax();
        if asym > 1e-12 * normal_matrix.amax() || normal_matrix.clone().cholesky().is_none() {
            return Err(Error::InvalidCovariance("normal matrix is not symmetric positive definite".into()));
        }
        Ok(Self { mean, normal_matrix })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        invert_normal(&self.normal_matrix)
    }

    pub fn log_density(&self, x: &DVector<f64>) -> f64 {
        let d = x - &self.mean;
        let chol = self.normal_matrix.clone().cholesky().expect("checked at construction");
        let log_det: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
        let n = self.dim() as f64;
        0.5 * (log_det - n * (2.0 * std::f64::consts::PI).ln()) - 0.5 * (d.transpose() * &self.normal_matrix * &d)[(0, 0)]
    }

    pub fn density(&self, x: &DVector<f64>) -> f64 {
        self.log_density(x).exp()
    }
}

/// Conditional density of `A` given `R = ρ₀`: `N(A*(ρ₀), C_A⁻¹)`.
pub fn conditional_attributable(mov: &MOVOrbit) -> Result<ConditionalGaussian> {
    if !mov.converged {
        return Err(Error::Contract("the conditional density needs a converged fit".into()));
    }
    let a = mov.orbit.attributable;
    ConditionalGaussian::new(
        DVector::from_column_slice(a.as_slice()),
        DMatrix::from_fn(4, 4, |i, j| 0.5 * (mov.c_a[(i, j)] + mov.c_a[(j, i)])),
    )
}

/// Standard Gaussian `N(0, I_m)` conditioned on `W = {Bx + ξ*}`, in the
/// parameters `x`: `N(0, (BᵀB)⁻¹)`.
///
/// `ξ*` must be orthogonal to the range of `B`. The normal matrix is
/// assembled from the triangular factor of `B`.
pub fn conditional_gaussian_on_affine(b: &DMatrix<f64>, xi_star: &DVector<f64>) -> Result<ConditionalGaussian> {
    let (m, n) = b.shape();
    if xi_star.len() != m {
        return Err(Error::Contract("ξ* length differs from the rows of B".into()));
    }
    if m <= n {
        return Err(Error::Contract(format!("need more rows than columns (got {m}×{n})")));
    }
    let sv = b.clone().svd(false, false).singular_values;
    let tol = sv.max() * (m.max(n) as f64) * f64::EPSILON;
    if sv.iter().any(|s| *s <= tol) {
        return Err(Error::RankDeficient(format!("B has rank below {n}")));
    }
    let proj = (b.transpose() * xi_star).amax();
    if proj >= 1e-8 {
        return Err(Error::Contract(format!("ξ* is not orthogonal to range(B): ‖Bᵀξ*‖∞ = {proj:e}")));
    }
    let r = b.clone().qr().r();
    let normal = r.transpose() * r;
    let normal = 0.5 * (&normal + normal.transpose());
    ConditionalGaussian::new(DVector::zeros(n), normal)
}
