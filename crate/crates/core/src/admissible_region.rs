//! The admissible region: range / range-rate pairs compatible with a
//! Solar System body, its boundary and connected components.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::attributable::Attributable;
use crate::constants::{EARTH_SOI_AU, GM_EARTH, GM_SUN};
use crate::error::{Error, Result};
use crate::frames::line_of_sight;

/// Construction parameters of the admissible region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArConfig {
    /// Faintest absolute magnitude accepted (shooting-star limit).
    pub h_max: f64,
    /// Minimum range used when no magnitude is available [au].
    pub rho_min_default: f64,
    pub rho_max: f64,
    /// Cap on |ρ̇| [au/day].
    pub v_max: f64,
    /// Nodes of the logarithmic ρ mesh.
    pub n_nodes: usize,
    /// Orbits bound to the Earth inside this geocentric distance are excluded [au].
    pub earth_bound_radius: f64,
}

impl Default for ArConfig {
    fn default() -> Self {
        Self {
            h_max: 34.5,
            rho_min_default: 1e-5,
            rho_max: 100.0,
            v_max: 1.0,
            n_nodes: 2000,
            earth_bound_radius: EARTH_SOI_AU,
        }
    }
}

/// Minimum range implied by the shooting-star limit: an object at `rho`
/// with apparent magnitude `mag` and heliocentric distance ≈ `r_helio`
/// has `H = mag − 5 log₁₀(rho · r_helio)`; requiring `H ≤ h_max` bounds
/// `rho` from below.
pub fn shooting_star_rho_min(mean_magnitude: Option<f64>, r_helio: f64, config: &ArConfig) -> f64 {
    match mean_magnitude {
        Some(v) => 10f64.powf((v - config.h_max) / 5.0) / r_helio,
        None => config.rho_min_default,
    }
}

/// Quantities of the attributable/observer composition needed for the
/// energy functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArGeometry {
    /// Line of sight.
    pub u: Vector3<f64>,
    /// Velocity of the line of sight per unit range, `α̇ ∂ρ̂/∂α + δ̇ ∂ρ̂/∂δ`.
    pub w: Vector3<f64>,
    pub r_obs: Vector3<f64>,
    pub v_obs: Vector3<f64>,
    /// Observer position and velocity relative to the Earth.
    pub r_geo: Vector3<f64>,
    pub v_geo: Vector3<f64>,
}

impl ArGeometry {
    pub fn new(attr: &Attributable, observer: &(Vector3<f64>, Vector3<f64>), earth: &(Vector3<f64>, Vector3<f64>)) -> Self {
        let [u, du_da, du_dd] = line_of_sight(attr.alpha, attr.delta);
        Self {
            u,
            w: du_da * attr.alpha_dot + du_dd * attr.delta_dot,
            r_obs: observer.0,
            v_obs: observer.1,
            r_geo: observer.0 - earth.0,
            v_geo: observer.1 - earth.1,
        }
    }

    /// Heliocentric two-body energy [au²/day²].
    pub fn heliocentric_energy(&self, rho: f64, rho_dot: f64) -> Result<f64> {
        let r = self.r_obs + self.u * rho;
        let rn = r.norm();
        if rn == 0.0 {
            return Err(Error::Range("heliocentric distance is zero".into()));
        }
        let v = self.v_obs + self.u * rho_dot + self.w * rho;
        Ok(0.5 * v.norm_squared() - GM_SUN / rn)
    }

    /// ρ̇ at which the heliocentric energy is smallest for fixed ρ.
    pub fn heliocentric_vertex(&self) -> f64 {
        -self.v_obs.dot(&self.u)
    }

    pub fn geocentric_distance(&self, rho: f64) -> f64 {
        (self.r_geo + self.u * rho).norm()
    }

    /// Geocentric two-body energy [au²/day²].
    pub fn geocentric_energy(&self, rho: f64, rho_dot: f64) -> f64 {
        let r = self.r_geo + self.u * rho;
        let v = self.v_geo + self.u * rho_dot + self.w * rho;
        0.5 * v.norm_squared() - GM_EARTH / r.norm().max(f64::MIN_POSITIVE)
    }

    pub fn geocentric_vertex(&self) -> f64 {
        -self.v_geo.dot(&self.u)
    }
}

/// Heliocentric energy of the orbit `(A, ρ, ρ̇)` seen from `observer`.
pub fn heliocentric_energy(attr: &Attributable, observer: &(Vector3<f64>, Vector3<f64>), rho: f64, rho_dot: f64) -> Result<f64> {
    ArGeometry::new(attr, observer, &(Vector3::zeros(), Vector3::zeros())).heliocentric_energy(rho, rho_dot)
}

/// Root of a function increasing away from `inner` toward `outer`, with
/// `f(inner) ≤ 0 < f(outer)`.
fn bisect<F: Fn(f64) -> f64>(f: F, mut inner: f64, mut outer: f64, tol: f64) -> f64 {
    for _ in 0..200 {
        if (outer - inner).abs() <= tol {
            break;
        }
        let mid = 0.5 * (inner + outer);
        if f(mid) <= 0.0 {
            inner = mid;
        } else {
            outer = mid;
        }
    }
    0.5 * (inner + outer)
}

const ROOT_TOL: f64 = 1e-10;

/// One ρ node of the boundary mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slice {
    pub rho: f64,
    /// Heliocentric-energy interval in ρ̇ (clipped to the cap), if any.
    pub bound: Option<(f64, f64)>,
    /// Excluded Earth-bound ρ̇ interval inside `bound`, if any.
    pub hole: Option<(f64, f64)>,
}

impl Slice {
    /// Admissible ρ̇ intervals of this slice.
    pub fn intervals(&self) -> Vec<(f64, f64)> {
        match (self.bound, self.hole) {
            (None, _) => vec![],
            (Some(b), None) => vec![b],
            (Some((lo, hi)), Some((hlo, hhi))) => {
                let mut out = Vec::with_capacity(2);
                if hlo > lo {
                    out.push((lo, hlo.min(hi)));
                }
                if hhi < hi {
                    out.push((hhi.max(lo), hi));
                }
                out
            }
        }
    }

    pub fn length(&self) -> f64 {
        self.intervals().iter().map(|(a, b)| b - a).sum()
    }
}

/// A connected component: a maximal ρ interval with nonempty slices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub rho_lo: f64,
    pub rho_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleRegion {
    pub attributable: Attributable,
    pub observer_state: (Vector3<f64>, Vector3<f64>),
    pub earth_state: (Vector3<f64>, Vector3<f64>),
    pub geometry: ArGeometry,
    pub rho_min: f64,
    pub rho_max: f64,
    pub v_max: f64,
    pub earth_bound_radius: f64,
    pub slices: Vec<Slice>,
    pub components: Vec<Component>,
    /// Closed polylines in `(ρ, ρ̇)`: one outer ring per component followed
    /// by the rims of the Earth-bound holes.
    pub boundary: Vec<Vec<(f64, f64)>>,
    pub n_components: usize,
}

impl AdmissibleRegion {
    pub fn is_empty(&self) -> bool {
        self.n_components == 0
    }

    /// True if the orbit is geocentrically bound inside the exclusion sphere.
    pub fn earth_bound(&self, rho: f64, rho_dot: f64) -> bool {
        self.geometry.geocentric_distance(rho) < self.earth_bound_radius && self.geometry.geocentric_energy(rho, rho_dot) < 0.0
    }

    /// Membership test.
    pub fn contains(&self, rho: f64, rho_dot: f64) -> bool {
        if !(rho >= self.rho_min && rho <= self.rho_max && rho_dot.abs() <= self.v_max) {
            return false;
        }
        match self.geometry.heliocentric_energy(rho, rho_dot) {
            Ok(e) if e <= 0.0 => !self.earth_bound(rho, rho_dot),
            _ => false,
        }
    }

    /// `[ρ_lo, ρ_hi] × [ρ̇_lo, ρ̇_hi]` enclosing the region.
    pub fn bounding_box(&self) -> Option<((f64, f64), (f64, f64))> {
        let first = self.components.first()?;
        let last = self.components.last()?;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for s in &self.slices {
            if let Some((a, b)) = s.bound {
                lo = lo.min(a);
                hi = hi.max(b);
            }
        }
        Some(((first.rho_lo, last.rho_hi), (lo, hi)))
    }

    /// Area of the region in `(ρ, ρ̇)` by trapezoidal integration of the
    /// slice lengths over the mesh.
    pub fn area(&self) -> f64 {
        self.slices
            .windows(2)
            .map(|w| 0.5 * (w[0].length() + w[1].length()) * (w[1].rho - w[0].rho))
            .sum()
    }

    /// Boundary CSV rows `rho,rho_dot,component_id`.
    pub fn boundary_csv(&self) -> String {
        let mut out = String::from("rho,rho_dot,component_id\n");
        for (id, ring) in self.boundary.iter().enumerate() {
            for (r, rd) in ring {
                out.push_str(&format!("{r:.12e},{rd:.12e},{id}\n"));
            }
        }
        out
    }
}

fn slice_at(g: &ArGeometry, rho: f64, v_max: f64, earth_radius: f64) -> Result<Slice> {
    let vertex = g.heliocentric_vertex();
    let e_min = g.heliocentric_energy(rho, vertex)?;
    if e_min > 0.0 {
        return Ok(Slice {
            rho,
            bound: None,
            hole: None,
        });
    }
    let reach = (2.0 * e_min.abs()).sqrt() * 2.0 + 1e-12;
    let f = |rd: f64| g.heliocentric_energy(rho, rd).unwrap_or(f64::INFINITY);
    let hi = bisect(f, vertex, vertex + reach, ROOT_TOL).min(v_max);
    let lo = bisect(f, vertex, vertex - reach, ROOT_TOL).max(-v_max);
    if lo > hi {
        return Ok(Slice {
            rho,
            bound: None,
            hole: None,
        });
    }
    let mut hole = None;
    if g.geocentric_distance(rho) < earth_radius {
        let gv = g.geocentric_vertex();
        let ge = g.geocentric_energy(rho, gv);
        if ge < 0.0 {
            let reach = (2.0 * ge.abs()).sqrt() * 2.0 + 1e-12;
            let fg = |rd: f64| g.geocentric_energy(rho, rd);
            let h_hi = bisect(fg, gv, gv + reach, ROOT_TOL);
            let h_lo = bisect(fg, gv, gv - reach, ROOT_TOL);
            if h_hi > lo && h_lo < hi {
                hole = Some((h_lo, h_hi));
            }
        }
    }
    Ok(Slice {
        rho,
        bound: Some((lo, hi)),
        hole,
    })
}

/// Trace the admissible region on a logarithmic ρ mesh.
///
/// `magnitude` is the mean apparent magnitude of the arc, used for the
/// shooting-star limit. An empty region is returned (not an error) when no
/// ρ is admissible.
pub fn ar_boundary(
    attr: &Attributable,
    observer: &(Vector3<f64>, Vector3<f64>),
    earth: &(Vector3<f64>, Vector3<f64>),
    magnitude: Option<f64>,
    config: &ArConfig,
) -> Result<AdmissibleRegion> {
    if config.n_nodes < 2 || !(config.rho_max > 0.0) || !(config.v_max > 0.0) {
        return Err(Error::Config("admissible-region mesh needs ≥ 2 nodes and positive caps".into()));
    }
    if !attr.vector().iter().all(|v| v.is_finite()) {
        return Err(Error::Range("non-finite attributable".into()));
    }
    let g = ArGeometry::new(attr, observer, earth);
    let rho_min = shooting_star_rho_min(magnitude, observer.0.norm(), config).min(config.rho_max);
    let n = config.n_nodes;
    let ratio = (config.rho_max / rho_min).ln();
    let mut slices = Vec::with_capacity(n);
    for i in 0..n {
        let rho = if i + 1 == n {
            config.rho_max
        } else {
            rho_min * (ratio * i as f64 / (n - 1) as f64).exp()
        };
        slices.push(slice_at(&g, rho, config.v_max, config.earth_bound_radius)?);
    }

    // components: maximal runs of nonempty slices, ends refined in ρ
    let nonempty = |rho: f64| -> bool {
        g.heliocentric_energy(rho, g.heliocentric_vertex())
            .map(|e| e <= 0.0)
            .unwrap_or(false)
    };
    let mut components = Vec::new();
    let mut i = 0;
    while i < n {
        if slices[i].bound.is_none() {
            i += 1;
            continue;
        }
        let start = i;
        while i + 1 < n && slices[i + 1].bound.is_some() {
            i += 1;
        }
        let end = i;
        let rho_lo = if start == 0 {
            slices[0].rho
        } else {
            refine_edge(&nonempty, slices[start].rho, slices[start - 1].rho)
        };
        let rho_hi = if end + 1 == n {
            slices[end].rho
        } else {
            refine_edge(&nonempty, slices[end].rho, slices[end + 1].rho)
        };
        components.push((start, end, Component { rho_lo, rho_hi }));
        i += 1;
    }

    let mut boundary = Vec::new();
    for (start, end, _) in &components {
        let mut ring: Vec<(f64, f64)> = (*start..=*end).map(|k| (slices[k].rho, slices[k].bound.unwrap().1)).collect();
        ring.extend((*start..=*end).rev().map(|k| (slices[k].rho, slices[k].bound.unwrap().0)));
        boundary.push(ring);
    }
    // rims of the Earth-bound holes, one ring per run of holed slices
    let mut k = 0;
    while k < n {
        if slices[k].hole.is_none() {
            k += 1;
            continue;
        }
        let start = k;
        while k + 1 < n && slices[k + 1].hole.is_some() {
            k += 1;
        }
        let mut ring: Vec<(f64, f64)> = (start..=k).map(|j| (slices[j].rho, slices[j].hole.unwrap().1)).collect();
        ring.extend((start..=k).rev().map(|j| (slices[j].rho, slices[j].hole.unwrap().0)));
        boundary.push(ring);
        k += 1;
    }

    Ok(AdmissibleRegion {
        attributable: attr.clone(),
        observer_state: *observer,
        earth_state: *earth,
        geometry: g,
        rho_min,
        rho_max: config.rho_max,
        v_max: config.v_max,
        earth_bound_radius: config.earth_bound_radius,
        slices,
        n_components: components.len(),
        components: components.into_iter().map(|c| c.2).collect(),
        boundary,
    })
}

/// Bisection in ρ between an admissible node and an empty one.
fn refine_edge(nonempty: &dyn Fn(f64) -> bool, mut inside: f64, mut outside: f64) -> f64 {
    for _ in 0..100 {
        if (inside - outside).abs() <= 1e-12 * inside.abs().max(outside.abs()) {
            break;
        }
        let mid = 0.5 * (inside + outside);
        if nonempty(mid) {
            inside = mid;
        } else {
            outside = mid;
        }
    }
    inside
}
