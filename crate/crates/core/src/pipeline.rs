//! End-to-end hazard assessment of one short arc.

use std::path::Path;

use nalgebra::{Matrix4, Vector2, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admissible_region::{ar_boundary, AdmissibleRegion};
use crate::attributable::{curvature_snr, fit_attributable, Attributable};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::mov::{
    assign_chi, doubly_constrained_corrections_at_level, full_differential_corrections, mov_csv, ChiSummary, FitConfig,
    MOVOrbit, NominalOrbit, OrbitAtEpoch, ResidualModel,
};
use crate::obs::{build_weight_matrix, Observation, ObservationBatch, ObservatoryTable};
use crate::probability::{impact_probability, jeffreys_impact_probability, jeffreys_weights, sample_weights, WeightedSample};
use crate::propagation::encounter::scan_close_approaches_with;
use crate::sampling::{
    first_grid_spec, make_cobweb, make_grid, refine_grid, samples_csv, CobwebParams, GridSpec, SamplePoint, SamplingMode,
};

pub const REPORT_SCHEMA: &str = "shortarc.hazard-report/v1";

/// A pipeline failure tagged with the stage that produced it.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub error: Error,
}

impl std::fmt::Display for StageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "stage {}: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageError {}

/// Machine-readable form of a [`StageError`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureReport {
    pub schema: String,
    pub stage: String,
    pub diagnostic: String,
}

impl From<&StageError> for FailureReport {
    fn from(e: &StageError) -> Self {
        Self {
            schema: REPORT_SCHEMA.into(),
            stage: e.stage.into(),
            diagnostic: e.error.to_string(),
        }
    }
}

trait Stage<T> {
    fn stage(self, stage: &'static str) -> std::result::Result<T, StageError>;
}

impl<T> Stage<T> for Result<T> {
    fn stage(self, stage: &'static str) -> std::result::Result<T, StageError> {
        self.map_err(|error| StageError { stage, error })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributableSummary {
    pub alpha: f64,
    pub delta: f64,
    pub alpha_dot: f64,
    pub delta_dot: f64,
    pub mean_epoch: f64,
    pub covariance: [[f64; 4]; 4],
    pub fit_rms: f64,
    pub curvature_snr: f64,
}

impl AttributableSummary {
    pub fn new(attr: &Attributable, fit_rms: f64, curvature_snr: f64) -> Self {
        let cov = attr.covariance;
        Self {
            alpha: attr.alpha,
            delta: attr.delta,
            alpha_dot: attr.alpha_dot,
            delta_dot: attr.delta_dot,
            mean_epoch: attr.mean_epoch,
            covariance: std::array::from_fn(|i| std::array::from_fn(|j| cov[(i, j)])),
            fit_rms,
            curvature_snr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSummary {
    pub rho_min: f64,
    pub rho_max: f64,
    pub n_components: usize,
    pub area: f64,
    pub bounding_box: ((f64, f64), (f64, f64)),
}

impl From<&AdmissibleRegion> for RegionSummary {
    fn from(region: &AdmissibleRegion) -> Self {
        Self {
            rho_min: region.rho_min,
            rho_max: region.rho_max,
            n_components: region.n_components,
            area: region.area(),
            bounding_box: region.bounding_box().unwrap_or(((0.0, 0.0), (0.0, 0.0))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CobwebSummary {
    pub lambda1: f64,
    pub lambda2: f64,
    pub v1: [f64; 2],
    pub center: [f64; 2],
    pub n_r: usize,
    pub n_theta: usize,
    pub chi_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingSummary {
    /// "grid" or "cobweb".
    pub method: String,
    /// Coordinates of the final point set.
    pub coordinates: SamplingMode,
    /// Every grid used, first to last.
    pub grids: Vec<GridSpec>,
    pub cobweb: Option<CobwebSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NominalSummary {
    pub orbit: OrbitAtEpoch,
    pub q: f64,
    pub iterations: usize,
    /// Nominal orbit available and curvature SNR above the threshold.
    pub reliable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    /// Points of the final sample set.
    pub samples: usize,
    pub in_region: usize,
    pub converged: usize,
    /// Converged with χ at most the reporting tier.
    pub chi_report: usize,
    /// Converged with χ below the cut.
    pub retained: usize,
    pub impactors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncounterSummary {
    pub samples_with_encounters: usize,
    pub min_miss_distance_au: Option<f64>,
    pub earliest_tca: Option<f64>,
    pub window_days: f64,
    pub detection_radius_au: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardReport {
    pub schema: String,
    pub observations: usize,
    pub arc_days: f64,
    pub attributable: AttributableSummary,
    pub admissible_region: RegionSummary,
    pub nominal: Option<NominalSummary>,
    pub sampling: SamplingSummary,
    pub counts: Counts,
    pub q_star: f64,
    pub best_fit: OrbitAtEpoch,
    pub chi_tiers: [f64; 2],
    /// Counts of retained samples per unit χ bin `[k, k+1)`.
    pub chi_histogram: Vec<usize>,
    pub impact_probability: f64,
    /// Same integral under the Jeffreys-form density (comparison only).
    pub impact_probability_jeffreys: Option<f64>,
    pub encounters: EncounterSummary,
    pub notes: Vec<String>,
    pub config: Config,
}

impl HazardReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is always serializable")
    }
}

/// CSV sidecars of a pipeline run.
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    pub ar_boundary: String,
    pub samples: String,
    pub mov: String,
    pub weights: String,
    pub encounters: String,
}

impl Artifacts {
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, body) in [
            ("ar_boundary.csv", &self.ar_boundary),
            ("samples.csv", &self.samples),
            ("mov.csv", &self.mov),
            ("weights.csv", &self.weights),
            ("encounters.csv", &self.encounters),
        ] {
            std::fs::write(dir.join(name), body)?;
        }
        Ok(())
    }
}

/// A fitted grid: its points and the fits of the in-region ones.
#[derive(Debug, Clone)]
pub struct FittedGrid {
    pub spec: GridSpec,
    pub points: Vec<SamplePoint>,
    /// Fits of `points` that lie in the region, in point order.
    pub fits: Vec<(SamplePoint, MOVOrbit)>,
}

/// Everything a run produced, for inspection beyond the report.
#[derive(Debug)]
pub struct PipelineRun {
    pub report: HazardReport,
    pub artifacts: Artifacts,
    pub attributable: Attributable,
    pub model: ResidualModel,
    pub region: AdmissibleRegion,
    pub nominal: Option<NominalOrbit>,
    /// All grids fitted, first to last (empty on the cobweb path).
    pub grids: Vec<FittedGrid>,
    /// Final sample set with weights and encounter outcomes.
    pub samples: Vec<WeightedSample>,
    pub chi: ChiSummary,
}

fn failed_mov(start: &OrbitAtEpoch, index: (usize, usize), level: usize, m: usize, diagnostic: String) -> MOVOrbit {
    MOVOrbit {
        orbit: *start,
        q: f64::INFINITY,
        chi: None,
        c_a: Matrix4::zeros(),
        b_a: nalgebra::DMatrix::zeros(m, 4),
        b_rho: nalgebra::DMatrix::zeros(m, 2),
        xi: nalgebra::DVector::zeros(m),
        converged: false,
        iterations: 0,
        stationarity: f64::INFINITY,
        level,
        index: Some(index),
        diagnostic: Some(diagnostic),
    }
}

/// Doubly constrained fit at every in-region point, in parallel.
pub fn fit_points(points: &[SamplePoint], a_init: &Vector4<f64>, model: &ResidualModel, config: &FitConfig) -> Vec<(SamplePoint, MOVOrbit)> {
    points
        .par_iter()
        .filter(|p| p.in_ar)
        .map(|p| {
            let start = OrbitAtEpoch {
                attributable: *a_init,
                rho: p.rho.x,
                rho_dot: p.rho.y,
                epoch: model.epoch(),
            };
            let level = model.level_for(&start);
            let fit = doubly_constrained_corrections_at_level(a_init, &p.rho, model, level, config, Some(p.index))
                .unwrap_or_else(|e| failed_mov(&start, p.index, level, model.m(), e.to_string()));
            (p.clone(), fit)
        })
        .collect()
}

/// MOV fits at the in-region nodes of `spec`.
pub fn fit_grid(spec: GridSpec, region: &AdmissibleRegion, a_init: &Vector4<f64>, model: &ResidualModel, config: &FitConfig) -> Result<FittedGrid> {
    let points = make_grid(&spec, region)?;
    let fits = fit_points(&points, a_init, model, config);
    Ok(FittedGrid { spec, points, fits })
}

/// Grid indices of converged fits with χ below `chi_cut` (χ assigned
/// within the grid).
pub fn selected_indices(fits: &mut [(SamplePoint, MOVOrbit)], m: usize, chi_cut: f64) -> Vec<(usize, usize)> {
    let mut movs: Vec<MOVOrbit> = fits.iter().map(|f| f.1.clone()).collect();
    if assign_chi(&mut movs, None, m).is_err() {
        return Vec::new();
    }
    for (f, mv) in fits.iter_mut().zip(movs) {
        f.1.chi = mv.chi;
    }
    fits.iter()
        .filter(|(_, mv)| mv.chi.is_some_and(|c| c < chi_cut))
        .map(|(p, _)| p.index)
        .collect()
}

/// Best converged orbit of a coarse scan over the region, used to seed the
/// full corrections.
/// Converged points of a coarse scan, best first, as starting points for
/// the full corrections.
pub(crate) fn seed_orbits(region: &AdmissibleRegion, attr: &Vector4<f64>, model: &ResidualModel, config: &Config) -> Vec<OrbitAtEpoch> {
    let mut sc = config.sampling.clone();
    sc.grid_n1 = config.pipeline.seed_scan_nodes;
    sc.grid_n2 = config.pipeline.seed_scan_nodes;
    let Ok(points) = first_grid_spec(region, &sc).and_then(|spec| make_grid(&spec, region)) else {
        return Vec::new();
    };
    let mut fits: Vec<MOVOrbit> = fit_points(&points, attr, model, &config.fit)
        .into_iter()
        .map(|(_, m)| m)
        .filter(|m| m.converged)
        .collect();
    fits.sort_by(|a, b| a.q.total_cmp(&b.q));
    fits.into_iter().map(|m| m.orbit).collect()
}

pub(crate) fn nominal_orbit(region: &AdmissibleRegion, attr: &Vector4<f64>, model: &ResidualModel, config: &Config) -> Option<NominalOrbit> {
    for seed in seed_orbits(region, attr, model, config).iter().take(SEED_ATTEMPTS) {
        match full_differential_corrections(&seed.as_vector6(), model, &config.fit) {
            Ok(n) => return Some(n),
            Err(e) => log::info!("full differential corrections failed: {e}"),
        }
    }
    None
}

/// Scan points tried as seeds before giving up on a nominal orbit.
const SEED_ATTEMPTS: usize = 3;

/// Scan every retained sample for close approaches over the window.
fn monitor(samples: &mut [WeightedSample], model: &ResidualModel, config: &Config) -> Result<()> {
    let chi_cut = config.probability.chi_cut;
    let outcomes: Vec<Result<Vec<_>>> = samples
        .par_iter()
        .map(|s| {
            if !s.retained(chi_cut) {
                return Ok(Vec::new());
            }
            let state = model.state_of(&s.mov.orbit);
            scan_close_approaches_with(
                &state,
                config.monitoring.window_days,
                model.propagator(),
                config.monitoring.detection_radius_au,
                false,
            )
        })
        .collect();
    for (s, out) in samples.iter_mut().zip(outcomes) {
        match out {
            Ok(records) => {
                s.impact = records.iter().any(|r| r.impact);
                s.encounters = records;
            }
            Err(e) => {
                // a sample that cannot be propagated over the window (e.g. it
                // falls into the Sun) has no Earth encounter to report
                log::warn!("monitoring failed for sample {:?}: {e}", s.sample.index);
            }
        }
    }
    Ok(())
}

fn weights_csv(samples: &[WeightedSample]) -> String {
    let mut out = String::from("i,j,chi,G_mu,G_sigma,weight,impact\n");
    for s in samples {
        let chi = s.mov.chi.map(|c| format!("{c:.10e}")).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{:.15e},{:.15e},{:.15e},{}\n",
            s.sample.index.0,
            s.sample.index.1,
            chi,
            s.g_mu,
            s.g_sigma(),
            s.weight,
            s.impact as u8
        ));
    }
    out
}

fn encounters_csv(samples: &[WeightedSample]) -> String {
    let mut out = String::from("sample_i,sample_j,tca,miss_au,mtp_xi,mtp_zeta,impact\n");
    for s in samples {
        for r in &s.encounters {
            out.push_str(&format!(
                "{},{},{:.10},{:.15e},{:.15e},{:.15e},{}\n",
                s.sample.index.0, s.sample.index.1, r.tca, r.miss_distance, r.mtp_xi, r.mtp_zeta, r.impact as u8
            ));
        }
    }
    out
}

/// Outcome of χ assignment, monitoring and weighting of one sample set.
#[derive(Debug, Clone)]
pub struct Assessment {
    pub samples: Vec<WeightedSample>,
    pub chi: ChiSummary,
    pub impact_probability: f64,
    pub impact_probability_jeffreys: Option<f64>,
    pub notes: Vec<String>,
}

/// χ values (against `nominal` too, when given), 30-day monitoring of the
/// retained samples and both densities for a set of MOV fits.
pub fn assess(
    fits: Vec<(SamplePoint, MOVOrbit)>,
    nominal: Option<&NominalOrbit>,
    model: &ResidualModel,
    config: &Config,
) -> std::result::Result<Assessment, StageError> {
    let chi_cut = config.probability.chi_cut;
    let mut notes = Vec::new();
    let mut movs: Vec<MOVOrbit> = fits.iter().map(|f| f.1.clone()).collect();
    let chi = assign_chi(&mut movs, nominal, model.m()).stage("chi")?;
    let mut samples: Vec<WeightedSample> = fits
        .into_iter()
        .zip(movs)
        .map(|((p, _), mv)| WeightedSample::new(p, mv))
        .collect();

    monitor(&mut samples, model, config).stage("monitoring")?;
    sample_weights(&mut samples, chi_cut).stage("probability")?;
    let impact_probability = impact_probability(&samples);
    let impact_probability_jeffreys = if config.probability.jeffreys_comparison {
        match jeffreys_weights(&mut samples, chi_cut) {
            Ok(()) => Some(jeffreys_impact_probability(&samples)),
            Err(e) => {
                notes.push(format!("Jeffreys-form comparison unavailable: {e}"));
                None
            }
        }
    } else {
        None
    };
    Ok(Assessment {
        samples,
        chi,
        impact_probability,
        impact_probability_jeffreys,
        notes,
    })
}

/// The fitted attributable, residual model and admissible region of one
/// batch: everything the sampling stages start from.
#[derive(Debug)]
pub struct Prepared {
    pub batch: ObservationBatch,
    pub attributable: Attributable,
    pub fit_rms: f64,
    pub curvature_snr: f64,
    pub model: ResidualModel,
    pub region: AdmissibleRegion,
}

pub fn prepare(observations: Vec<Observation>, table: &ObservatoryTable, config: &Config) -> Result<Prepared> {
    let batch = ObservationBatch::with_max_arc(observations, config.observations.max_arc_days)?;
    let weights = build_weight_matrix(&batch);
    let (attributable, fit_rms) = fit_attributable(batch.observations(), &weights)?;
    let curvature_snr = curvature_snr(batch.observations(), &weights);
    let prop = config.propagation.propagator();
    let model = ResidualModel::new(&batch, &weights, table, &prop)?;
    let earth = prop.eph.earth_state(attributable.mean_epoch);
    let region = ar_boundary(&attributable, model.observer(), &earth, batch.mean_magnitude(), &config.admissible_region)?;
    Ok(Prepared {
        batch,
        attributable,
        fit_rms,
        curvature_snr,
        model,
        region,
    })
}

/// Full corrections from the best points of a coarse scan.
pub fn find_nominal(prepared: &Prepared, config: &Config) -> Option<NominalOrbit> {
    nominal_orbit(&prepared.region, &prepared.attributable.vector(), &prepared.model, config)
}

/// Reliability rule: a nominal orbit exists and the arc shows significant
/// curvature.
pub fn is_reliable(nominal: Option<&NominalOrbit>, curvature_snr: f64, config: &Config) -> bool {
    nominal.is_some() && curvature_snr > config.pipeline.reliability_snr
}

/// Read an MPC file and an optional weights file, then run the pipeline.
pub fn run_hazard_pipeline_files(
    observations: &Path,
    weights: Option<&Path>,
    table: &ObservatoryTable,
    config: &Config,
) -> std::result::Result<PipelineRun, StageError> {
    let obs = load_observations(observations, weights, config).stage("ingest")?;
    run_hazard_pipeline(obs, table, config)
}

/// Read an MPC file and apply an optional per-observation weights file.
pub fn load_observations(observations: &Path, weights: Option<&Path>, config: &Config) -> Result<Vec<Observation>> {
    let mut obs = crate::obs::read_mpc_file(observations)?;
    if let Some(path) = weights {
        let text = std::fs::read_to_string(path)?;
        let overrides = crate::obs::parse_weights_text(&text)?;
        obs.sort_by(|a, b| a.epoch.total_cmp(&b.epoch));
        let mut batch = ObservationBatch::with_max_arc(obs, config.observations.max_arc_days)?;
        batch.apply_sigmas(&overrides)?;
        obs = batch.observations().to_vec();
    }
    Ok(obs)
}

/// Attributable → full corrections → reliability rule → cobweb or
/// two-step grid → MOV fits → χ → monitoring → densities → report.
pub fn run_hazard_pipeline(
    observations: Vec<Observation>,
    table: &ObservatoryTable,
    config: &Config,
) -> std::result::Result<PipelineRun, StageError> {
    config.validate().stage("config")?;
    let mut notes = Vec::new();
    let batch = ObservationBatch::with_max_arc(observations, config.observations.max_arc_days).stage("ingest")?;
    let weights = build_weight_matrix(&batch);

    let (attr, fit_rms) = fit_attributable(batch.observations(), &weights).stage("attributable")?;
    let snr = curvature_snr(batch.observations(), &weights);

    let prop = config.propagation.propagator();
    let model = ResidualModel::new(&batch, &weights, table, &prop).stage("residual-model")?;
    let earth = prop.eph.earth_state(attr.mean_epoch);
    let region = ar_boundary(&attr, model.observer(), &earth, batch.mean_magnitude(), &config.admissible_region)
        .stage("admissible-region")?;
    if region.is_empty() {
        return Err(StageError {
            stage: "admissible-region",
            error: Error::EmptyRegion,
        });
    }
    let a_init = attr.vector();

    // nominal orbit from the best point of a coarse scan
    let nominal = nominal_orbit(&region, &a_init, &model, config);
    let reliable = is_reliable(nominal.as_ref(), snr, config);
    let cobweb_params = match (&nominal, reliable && !config.pipeline.force_grid) {
        (Some(n), true) => match CobwebParams::from_covariance(&n.gamma_rho(), n.orbit.range()) {
            Ok(p) => Some(p),
            Err(e) => {
                notes.push(format!("cobweb unavailable ({e}); using grid sampling"));
                None
            }
        },
        _ => None,
    };

    let chi_cut = config.probability.chi_cut;
    let m = model.m();
    let mut grids = Vec::new();
    let (final_fits, sampling, chi_nominal) = if let Some(params) = cobweb_params {
        let points = make_cobweb(&params, &region, &config.sampling).stage("sampling")?;
        let fits = fit_points(&points, &a_init, &model, &config.fit);
        let summary = SamplingSummary {
            method: "cobweb".into(),
            coordinates: SamplingMode::Cobweb,
            grids: Vec::new(),
            cobweb: Some(CobwebSummary {
                lambda1: params.lambda1,
                lambda2: params.lambda2,
                v1: [params.v1.x, params.v1.y],
                center: [params.center.x, params.center.y],
                n_r: config.sampling.cobweb_n_r,
                n_theta: config.sampling.cobweb_n_theta,
                chi_max: config.sampling.cobweb_chi_max,
            }),
        };
        (fits, summary, nominal.as_ref())
    } else {
        let spec = first_grid_spec(&region, &config.sampling).stage("sampling")?;
        let mut grid = fit_grid(spec, &region, &a_init, &model, &config.fit).stage("mov-fit")?;
        let rounds = if config.pipeline.refine {
            1 + config.pipeline.extra_refinements
        } else {
            0
        };
        for _ in 0..rounds {
            let selected = selected_indices(&mut grid.fits, m, chi_cut);
            let next = refine_grid(&grid.spec, &selected, config.sampling.refine_margin_cells).ok_or(StageError {
                stage: "refinement",
                error: Error::NoConvergedSamples(format!("no first-step sample with χ < {chi_cut}")),
            })?;
            let refined = fit_grid(next, &region, &a_init, &model, &config.fit).stage("mov-fit")?;
            grids.push(std::mem::replace(&mut grid, refined));
        }
        let fits = grid.fits.clone();
        grids.push(grid);
        let summary = SamplingSummary {
            method: "grid".into(),
            coordinates: grids[0].spec.mode,
            grids: grids.iter().map(|g| g.spec).collect(),
            cobweb: None,
        };
        (fits, summary, None)
    };

    let Assessment {
        samples,
        chi,
        impact_probability: ip,
        impact_probability_jeffreys: ip_jeffreys,
        notes: more_notes,
    } = assess(final_fits, chi_nominal, &model, config)?;
    notes.extend(more_notes);

    let retained: Vec<&WeightedSample> = samples.iter().filter(|s| s.retained(chi_cut)).collect();
    let mut hist = vec![0usize; chi_cut.ceil() as usize];
    for s in &retained {
        let c = s.mov.chi.unwrap_or(0.0);
        let k = (c.floor() as usize).min(hist.len() - 1);
        hist[k] += 1;
    }
    let with_enc: Vec<&&WeightedSample> = retained.iter().filter(|s| !s.encounters.is_empty()).collect();
    let counts = Counts {
        samples: match &sampling.cobweb {
            Some(c) => c.n_r * c.n_theta,
            None => grids.last().map(|g| g.points.len()).unwrap_or(0),
        },
        in_region: samples.len(),
        converged: samples.iter().filter(|s| s.mov.converged).count(),
        chi_report: samples
            .iter()
            .filter(|s| s.mov.converged && s.mov.chi.is_some_and(|c| c <= config.probability.chi_report))
            .count(),
        retained: retained.len(),
        impactors: retained.iter().filter(|s| s.impact).count(),
    };
    let not_converged = counts.in_region - counts.converged;
    if not_converged > 0 {
        notes.push(format!("{not_converged} in-region samples did not converge and carry no χ"));
    }
    if ip_jeffreys.is_some() {
        notes.push("impact_probability_jeffreys uses the Jeffreys-form density and is reported for comparison only".into());
    }

    let report = HazardReport {
        schema: REPORT_SCHEMA.into(),
        observations: batch.len(),
        arc_days: batch.arc_span(),
        attributable: AttributableSummary::new(&attr, fit_rms, snr),
        admissible_region: RegionSummary::from(&region),
        nominal: nominal.as_ref().map(|n| NominalSummary {
            orbit: n.orbit,
            q: n.q,
            iterations: n.iterations,
            reliable,
        }),
        sampling,
        counts,
        q_star: chi.q_star,
        best_fit: chi.x_star,
        chi_tiers: [config.probability.chi_report, chi_cut],
        chi_histogram: hist,
        impact_probability: ip,
        impact_probability_jeffreys: ip_jeffreys,
        encounters: EncounterSummary {
            samples_with_encounters: with_enc.len(),
            min_miss_distance_au: with_enc
                .iter()
                .flat_map(|s| s.encounters.iter().map(|r| r.miss_distance))
                .min_by(f64::total_cmp),
            earliest_tca: with_enc.iter().flat_map(|s| s.encounters.iter().map(|r| r.tca)).min_by(f64::total_cmp),
            window_days: config.monitoring.window_days,
            detection_radius_au: config.monitoring.detection_radius_au,
        },
        notes,
        config: config.clone(),
    };

    let all_points: Vec<SamplePoint> = match grids.last() {
        Some(g) => g.points.clone(),
        None => samples.iter().map(|s| s.sample.clone()).collect(),
    };
    let artifacts = Artifacts {
        ar_boundary: region.boundary_csv(),
        samples: samples_csv(&all_points),
        mov: mov_csv(&samples.iter().map(|s| s.mov.clone()).collect::<Vec<_>>()),
        weights: weights_csv(&samples),
        encounters: encounters_csv(&samples),
    };
    Ok(PipelineRun {
        report,
        artifacts,
        attributable: attr,
        model,
        region,
        nominal,
        grids,
        samples,
        chi,
    })
}

/// `(ρ, ρ̇)` of every retained sample.
pub fn retained_ranges(run: &PipelineRun, chi_cut: f64) -> Vec<Vector2<f64>> {
    run.samples.iter().filter(|s| s.retained(chi_cut)).map(|s| s.sample.rho).collect()
}
