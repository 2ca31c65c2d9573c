//! Pipeline configuration, read from and written to TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::admissible_region::ArConfig;
use crate::error::{Error, Result};
use crate::mov::FitConfig;
use crate::obs::{DEFAULT_MAX_ARC_DAYS, DEFAULT_SIGMA_ARCSEC};
use crate::propagation::encounter::DEFAULT_DETECTION_RADIUS;
use crate::propagation::{Ephemeris, ForceModel, Planet, Propagator, Tolerance, DEFAULT_MAX_SPAN_DAYS};
use crate::sampling::SamplingConfig;

/// Monitoring window after the mean observation epoch [days].
pub const DEFAULT_WINDOW_DAYS: f64 = 30.0;
/// Samples with χ below this carry probability.
pub const DEFAULT_CHI_CUT: f64 = 5.0;
/// Reporting tier: samples with χ at most this are the "good" core.
pub const DEFAULT_CHI_REPORT: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservationConfig {
    pub max_arc_days: f64,
    /// Astrometric sigma [arcsec] attached to records that carry none.
    pub default_sigma_arcsec: f64,
}

impl Default for ObservationConfig {
    fn default() -> Self {
        Self {
            max_arc_days: DEFAULT_MAX_ARC_DAYS,
            default_sigma_arcsec: DEFAULT_SIGMA_ARCSEC,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagationConfig {
    pub perturbers: Vec<Planet>,
    pub rtol: f64,
    pub atol: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub max_span_days: f64,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        let tol = Tolerance::default();
        Self {
            perturbers: ForceModel::default().perturbers,
            rtol: tol.rtol,
            atol: tol.atol,
            h_min: tol.h_min,
            h_max: tol.h_max,
            max_span_days: DEFAULT_MAX_SPAN_DAYS,
        }
    }
}

impl PropagationConfig {
    pub fn propagator(&self) -> Propagator {
        let mut p = Propagator::new(
            Ephemeris::default(),
            ForceModel {
                perturbers: self.perturbers.clone(),
            },
        );
        p.tolerance = Tolerance {
            rtol: self.rtol,
            atol: self.atol,
            h_min: self.h_min,
            h_max: self.h_max,
        };
        p.max_span_days = self.max_span_days;
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitoringConfig {
    pub window_days: f64,
    pub detection_radius_au: f64,
}

impl Default for MonitoringConfig {
    fn default() -> Self {
        Self {
            window_days: DEFAULT_WINDOW_DAYS,
            detection_radius_au: DEFAULT_DETECTION_RADIUS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbabilityConfig {
    pub chi_cut: f64,
    pub chi_report: f64,
    /// Also evaluate the Jeffreys-form comparison density.
    pub jeffreys_comparison: bool,
}

impl Default for ProbabilityConfig {
    fn default() -> Self {
        Self {
            chi_cut: DEFAULT_CHI_CUT,
            chi_report: DEFAULT_CHI_REPORT,
            jeffreys_comparison: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Run the second, restricted grid.
    pub refine: bool,
    /// Further restricted grids after the second one, each around the
    /// χ-selected cells of the previous grid.
    pub extra_refinements: usize,
    /// Curvature SNR above which a nominal orbit is trusted for cobweb
    /// sampling.
    pub reliability_snr: f64,
    /// Resolution of the coarse scan that seeds the full corrections.
    pub seed_scan_nodes: usize,
    /// Force grid sampling even when the nominal orbit is reliable.
    pub force_grid: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            refine: true,
            extra_refinements: 0,
            reliability_snr: 3.0,
            seed_scan_nodes: 12,
            force_grid: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub n_samples: usize,
    pub burn_in_fraction: f64,
    pub n_batches: usize,
    /// Acceptance-rate band outside which the step is retuned once.
    pub min_acceptance: f64,
    pub max_acceptance: f64,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            n_samples: 100_000,
            burn_in_fraction: 0.1,
            n_batches: 50,
            min_acceptance: 0.1,
            max_acceptance: 0.6,
        }
    }
}

/// Complete configuration tree.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub observations: ObservationConfig,
    pub admissible_region: ArConfig,
    pub sampling: SamplingConfig,
    pub fit: FitConfig,
    pub propagation: PropagationConfig,
    pub monitoring: MonitoringConfig,
    pub probability: ProbabilityConfig,
    pub pipeline: PipelineConfig,
    pub monte_carlo: MonteCarloConfig,
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("configuration is always representable")
    }

    pub fn validate(&self) -> Result<()> {
        self.sampling.validate()?;
        self.fit.validate()?;
        let p = &self.probability;
        if !(p.chi_cut > 0.0 && p.chi_report > 0.0 && p.chi_report <= p.chi_cut) {
            return Err(Error::Config("need 0 < chi_report ≤ chi_cut".into()));
        }
        if !(self.monitoring.window_days > 0.0 && self.monitoring.detection_radius_au > 0.0) {
            return Err(Error::Config("monitoring window and detection radius must be positive".into()));
        }
        if self.monitoring.window_days > self.propagation.max_span_days {
            return Err(Error::Config("monitoring window exceeds the propagation cap".into()));
        }
        if !(self.observations.max_arc_days > 0.0 && self.observations.default_sigma_arcsec > 0.0) {
            return Err(Error::Config("observation bounds must be positive".into()));
        }
        let mc = &self.monte_carlo;
        if mc.n_samples < 1000 || mc.n_batches < 2 || !(0.0..1.0).contains(&mc.burn_in_fraction) {
            return Err(Error::Config("Monte Carlo needs ≥ 1000 samples, ≥ 2 batches and a burn-in fraction in [0, 1)".into()));
        }
        if self.pipeline.seed_scan_nodes < 2 {
            return Err(Error::Config("seed scan needs at least 2 nodes per axis".into()));
        }
        if !(self.propagation.rtol > 0.0 && self.propagation.atol > 0.0 && self.propagation.h_min > 0.0) {
            return Err(Error::Config("integrator tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = Config::default();
        let text = cfg.to_toml_string();
        assert_eq!(Config::from_toml_str(&text).unwrap(), cfg);
        assert!(text.contains("window_days = 30.0"));
        assert!(text.contains("chi_cut = 5.0"));
        assert!(text.contains("chi_report = 2.0"));
    }

    #[test]
    fn partial_files_keep_defaults() {
        let cfg = Config::from_toml_str("[monitoring]\nwindow_days = 10.0\n").unwrap();
        assert_eq!(cfg.monitoring.window_days, 10.0);
        assert_eq!(cfg.probability.chi_cut, 5.0);
        assert!(Config::from_toml_str("[monitoring]\nwindow = 10.0\n").is_err());
        assert!(Config::from_toml_str("[probability]\nchi_report = 6.0\n").is_err());
    }
}
