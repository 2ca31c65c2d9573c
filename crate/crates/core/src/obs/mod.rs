//! Observation ingestion: astrometric records, observer geometry and the
//! weight matrix that defines normalized residuals.

pub mod mpc;
pub mod observatory;
pub mod time;

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::constants::{wrap_two_pi, ARCSEC};
use crate::error::{Error, Result};

pub use mpc::{format_mpc80, parse_mpc80, DEFAULT_SIGMA_ARCSEC};
pub use observatory::{observer_geocentric_state, observer_heliocentric_state, Observatory, ObservatoryTable};

/// A single optical astrometric measurement.
///
/// `epoch` is MJD TDB; angles are radians. `sigma_ra` is the uncertainty of
/// `α·cos δ` and, like `sigma_dec`, is expressed in arcseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub epoch: f64,
    pub ra: f64,
    pub dec: f64,
    pub obs_code: String,
    pub sigma_ra: f64,
    pub sigma_dec: f64,
    pub magnitude: Option<f64>,
}

impl Observation {
    pub fn new(
        epoch: f64,
        ra: f64,
        dec: f64,
        obs_code: String,
        sigma_ra: f64,
        sigma_dec: f64,
        magnitude: Option<f64>,
    ) -> Result<Self> {
        if !epoch.is_finite() || !ra.is_finite() {
            return Err(Error::Range("non-finite epoch or right ascension".into()));
        }
        if !(dec.abs() < PI / 2.0) {
            return Err(Error::Range(format!("declination {dec} outside (-π/2, π/2)")));
        }
        if !(sigma_ra > 0.0 && sigma_dec > 0.0) {
            return Err(Error::Range(format!(
                "astrometric sigmas must be positive (got {sigma_ra}, {sigma_dec})"
            )));
        }
        Ok(Self {
            epoch,
            ra: wrap_two_pi(ra),
            dec,
            obs_code,
            sigma_ra,
            sigma_dec,
            magnitude,
        })
    }
}

/// Default bound on the arc span of a batch [days].
pub const DEFAULT_MAX_ARC_DAYS: f64 = 10.0;

/// A time-ordered set of at least three observations of one object.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObservationBatch {
    observations: Vec<Observation>,
    mean_epoch: f64,
}

impl ObservationBatch {
    pub fn new(observations: Vec<Observation>) -> Result<Self> {
        Self::with_max_arc(observations, DEFAULT_MAX_ARC_DAYS)
    }

    /// Sorts by epoch and validates the batch invariants.
    pub fn with_max_arc(mut observations: Vec<Observation>, max_arc_days: f64) -> Result<Self> {
        if observations.len() < 3 {
            return Err(Error::InsufficientData(format!(
                "a batch needs at least 3 observations, got {}",
                observations.len()
            )));
        }
        observations.sort_by(|a, b| a.epoch.total_cmp(&b.epoch));
        if observations.windows(2).any(|w| w[1].epoch <= w[0].epoch) {
            return Err(Error::Range("observation epochs must be strictly increasing".into()));
        }
        let span = observations.last().unwrap().epoch - observations[0].epoch;
        if span > max_arc_days {
            return Err(Error::Range(format!(
                "arc spans {span:.3} days, above the {max_arc_days} day bound"
            )));
        }
        let mean_epoch =
            observations.iter().map(|o| o.epoch).sum::<f64>() / observations.len() as f64;
        Ok(Self {
            observations,
            mean_epoch,
        })
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn mean_epoch(&self) -> f64 {
        self.mean_epoch
    }

    /// Residual-space dimension `m = 2n`.
    pub fn residual_dim(&self) -> usize {
        2 * self.observations.len()
    }

    pub fn arc_span(&self) -> f64 {
        self.observations.last().unwrap().epoch - self.observations[0].epoch
    }

    /// Mean of the available magnitudes.
    pub fn mean_magnitude(&self) -> Option<f64> {
        let mags: Vec<f64> = self.observations.iter().filter_map(|o| o.magnitude).collect();
        (!mags.is_empty()).then(|| mags.iter().sum::<f64>() / mags.len() as f64)
    }

    /// Index of the observation closest to the mean epoch; its site is the
    /// reference observer of the attributable.
    pub fn reference_index(&self) -> usize {
        let t = self.mean_epoch;
        (0..self.observations.len())
            .min_by(|&a, &b| {
                (self.observations[a].epoch - t)
                    .abs()
                    .total_cmp(&(self.observations[b].epoch - t).abs())
            })
            .unwrap()
    }

    /// Replace per-observation sigmas (indices refer to time order).
    pub fn apply_sigmas(&mut self, overrides: &[(usize, f64, f64)]) -> Result<()> {
        for &(idx, sra, sdec) in overrides {
            let n = self.observations.len();
            let obs = self
                .observations
                .get_mut(idx)
                .ok_or_else(|| Error::Range(format!("weight index {idx} beyond {n} observations")))?;
            if !(sra > 0.0 && sdec > 0.0) {
                return Err(Error::Range(format!("non-positive sigma at index {idx}")));
            }
            obs.sigma_ra = sra;
            obs.sigma_dec = sdec;
        }
        Ok(())
    }
}

/// Diagonal weight matrix `W`, one entry per residual component in the
/// order `(ra₁, dec₁, ra₂, dec₂, …)`, in rad⁻².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightMatrix {
    diagonal: Vec<f64>,
}

impl WeightMatrix {
    pub fn from_diagonal(diagonal: Vec<f64>) -> Result<Self> {
        if diagonal.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::Range("weights must be positive and finite".into()));
        }
        Ok(Self { diagonal })
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    pub fn len(&self) -> usize {
        self.diagonal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diagonal.is_empty()
    }

    /// Scale factor turning a raw residual (radians) into a normalized one.
    pub fn sqrt_weight(&self, k: usize) -> f64 {
        self.diagonal[k].sqrt()
    }
}

pub fn weight_matrix_for(observations: &[Observation]) -> WeightMatrix {
    let diagonal = observations
        .iter()
        .flat_map(|o| {
            let sra = o.sigma_ra * ARCSEC;
            let sdec = o.sigma_dec * ARCSEC;
            [1.0 / (sra * sra), 1.0 / (sdec * sdec)]
        })
        .collect();
    WeightMatrix { diagonal }
}

/// `W = diag(1/σ²)` with σ converted to radians.
pub fn build_weight_matrix(batch: &ObservationBatch) -> WeightMatrix {
    weight_matrix_for(batch.observations())
}

/// Read an MPC 80-column file; blank lines and `#` comments are skipped.
pub fn read_mpc_file(path: &Path) -> Result<Vec<Observation>> {
    let text = std::fs::read_to_string(path)?;
    parse_mpc_text(&text)
}

pub fn parse_mpc_text(text: &str) -> Result<Vec<Observation>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let obs = parse_mpc80(line).map_err(|e| match e {
            Error::Parse {
                start,
                end,
                message,
            } => Error::Parse {
                start,
                end,
                message: format!("line {}: {message}", lineno + 1),
            },
            other => other,
        })?;
        out.push(obs);
    }
    Ok(out)
}

/// Parse a sidecar weights file of `index sigma_ra_arcsec sigma_dec_arcsec`
/// lines (0-based index in time order).
pub fn parse_weights_text(text: &str) -> Result<Vec<(usize, f64, f64)>> {
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::Config(format!("weights line {line:?}: expected 3 fields")));
        }
        let idx = fields[0]
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("bad index in {line:?}")))?;
        let sra = fields[1]
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("bad sigma_ra in {line:?}")))?;
        let sdec = fields[2]
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("bad sigma_dec in {line:?}")))?;
        out.push((idx, sra, sdec));
    }
    Ok(out)
}
