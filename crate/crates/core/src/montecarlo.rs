//! Independent impact-probability estimate by Markov chain Monte Carlo.
//!
//! A random-walk Metropolis chain samples the full six-parameter posterior
//! `exp(−m Q / 2)` over `(A, ρ, ρ̇)`, with a prior flat in `(ρ, ρ̇)` and
//! restricted to the admissible region. Every distinct state the chain
//! visits is propagated over the monitoring window; the estimate is the
//! impacting fraction of the retained draws.

use nalgebra::{DMatrix, Matrix6, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admissible_region::AdmissibleRegion;
use crate::config::Config;
use crate::error::{Error, Result};
use crate::mov::{doubly_constrained_corrections, invert_normal, OrbitAtEpoch, ResidualModel};
use crate::obs::{Observation, ObservatoryTable};
use crate::pipeline::{nominal_orbit, prepare, seed_orbits, Prepared};
use crate::propagation::encounter::scan_close_approaches_with;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloResult {
    pub impact_probability: f64,
    /// Batch-means standard error of the estimate.
    pub standard_error: f64,
    /// Retained (post burn-in) chain length.
    pub n_retained: usize,
    pub n_unique: usize,
    pub acceptance: f64,
    /// The proposal was rescaled and the chain rerun once.
    pub retuned: bool,
    pub warnings: Vec<String>,
    /// Starting orbit of the chain.
    pub start: OrbitAtEpoch,
}

struct Target<'a> {
    model: &'a ResidualModel,
    region: &'a AdmissibleRegion,
    level: usize,
}

impl Target<'_> {
    /// `−m Q / 2`, or `None` outside the support.
    fn log_density(&self, x: &Vector6<f64>) -> Option<f64> {
        if !self.region.contains(x[4], x[5]) || x[1].abs() >= std::f64::consts::FRAC_PI_2 {
            return None;
        }
        let orbit = OrbitAtEpoch::from_vector6(x, self.model.epoch()).ok()?;
        let xi = self.model.residuals(&orbit, self.level).ok()?;
        Some(-0.5 * xi.norm_squared())
    }
}

struct Chain {
    /// Distinct states in visiting order.
    states: Vec<Vector6<f64>>,
    /// Index into `states` of every retained draw.
    draws: Vec<usize>,
    acceptance: f64,
}

fn cholesky_of(cov: &Matrix6<f64>) -> Result<Matrix6<f64>> {
    let sym = 0.5 * (cov + cov.transpose());
    sym.cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::InvalidCovariance("proposal covariance is not positive definite".into()))
}

fn sample_covariance(xs: &[Vector6<f64>]) -> Matrix6<f64> {
    let n = xs.len() as f64;
    let mean = xs.iter().fold(Vector6::zeros(), |acc, x| acc + x) / n;
    xs.iter().fold(Matrix6::zeros(), |acc, x| {
        let d = x - mean;
        acc + d * d.transpose()
    }) / (n - 1.0)
}

/// Burn-in adapts the proposal to the running sample covariance; the
/// retained part uses it frozen.
fn run_chain(target: &Target, x0: Vector6<f64>, cov0: &Matrix6<f64>, scale: f64, n: usize, burn_in: usize, rng: &mut ChaCha8Rng) -> Result<Chain> {
    let mut lp = target
        .log_density(&x0)
        .ok_or_else(|| Error::Contract("Monte Carlo start lies outside the support".into()))?;
    let base = 2.38 * 2.38 / 6.0;
    let mut chol = cholesky_of(&(cov0 * (base * scale * scale)))?;
    let mut x = x0;
    let mut history = Vec::with_capacity(burn_in);
    let mut states = vec![x0];
    let mut draws = Vec::with_capacity(n - burn_in);
    let mut accepted = 0usize;
    for step in 0..n {
        if step < burn_in && step >= 1000 && step % 500 == 0 {
            let cov = sample_covariance(&history[history.len() / 2..]);
            if let Ok(c) = cholesky_of(&(cov * (base * scale * scale))) {
                chol = c;
            }
        }
        let z = Vector6::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        let y = x + chol * z;
        let u: f64 = rng.gen();
        let moved = match target.log_density(&y) {
            Some(lq) if u.ln() < lq - lp => {
                x = y;
                lp = lq;
                true
            }
            _ => false,
        };
        if step < burn_in {
            history.push(x);
            if moved {
                *states.last_mut().expect("never empty") = x;
            }
        } else {
            if moved {
                accepted += 1;
                states.push(x);
            }
            draws.push(states.len() - 1);
        }
    }
    Ok(Chain {
        states,
        draws,
        acceptance: accepted as f64 / (n - burn_in) as f64,
    })
}

/// Starting orbit and proposal covariance: the nominal orbit and its
/// covariance when the full corrections converge, otherwise the best
/// point of the coarse scan with the inverse of its full normal matrix.
fn start_point(region: &AdmissibleRegion, a_init: &nalgebra::Vector4<f64>, model: &ResidualModel, config: &Config) -> Result<(OrbitAtEpoch, Matrix6<f64>)> {
    if let Some(n) = nominal_orbit(region, a_init, model, config) {
        if region.contains(n.orbit.rho, n.orbit.rho_dot) {
            return Ok((n.orbit, n.covariance));
        }
    }
    let seed = seed_orbits(region, a_init, model, config)
        .into_iter()
        .next()
        .ok_or_else(|| Error::FitAborted {
            index: None,
            message: "no converged orbit to start the chain".into(),
        })?;
    let fit = doubly_constrained_corrections(&seed.attributable, &seed.range(), model, &config.fit)?;
    let n = fit.full_normal_matrix();
    let inv = invert_normal(&DMatrix::from_fn(6, 6, |i, j| n[(i, j)]))?;
    Ok((fit.orbit, Matrix6::from_fn(|i, j| inv[(i, j)])))
}

fn batch_means(flags: &[bool], n_batches: usize) -> f64 {
    let size = flags.len() / n_batches;
    if size == 0 {
        return f64::NAN;
    }
    let means: Vec<f64> = flags
        .chunks_exact(size)
        .take(n_batches)
        .map(|c| c.iter().filter(|&&f| f).count() as f64 / size as f64)
        .collect();
    let k = means.len() as f64;
    let mean = means.iter().sum::<f64>() / k;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (var / k).sqrt()
}

/// Impact probability of the batch by Metropolis sampling of the full
/// posterior, with `n_samples` chain steps of which the configured
/// burn-in fraction is discarded.
pub fn monte_carlo_ip(observations: Vec<Observation>, n_samples: usize, seed: u64, table: &ObservatoryTable, config: &Config) -> Result<MonteCarloResult> {
    config.validate()?;
    let mc = &config.monte_carlo;
    if n_samples < 1000 {
        return Err(Error::Config("the Monte Carlo oracle needs at least 1000 samples".into()));
    }
    let Prepared { attributable: attr, model, region, .. } = prepare(observations, table, config)?;
    let (start, cov) = start_point(&region, &attr.vector(), &model, config)?;
    let target = Target {
        model: &model,
        region: &region,
        level: model.level_for(&start),
    };
    let burn_in = (n_samples as f64 * mc.burn_in_fraction) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut warnings = Vec::new();
    let mut scale = 1.0;
    let mut chain = run_chain(&target, start.as_vector6(), &cov, scale, n_samples, burn_in, &mut rng)?;
    let mut retuned = false;
    if !(mc.min_acceptance..=mc.max_acceptance).contains(&chain.acceptance) {
        let message = format!("acceptance {:.3} outside [{}, {}]; rescaling the proposal and rerunning", chain.acceptance, mc.min_acceptance, mc.max_acceptance);
        log::warn!("{message}");
        warnings.push(message);
        // acceptance of a random walk falls roughly like 1/scale² in the tails
        scale = (chain.acceptance.max(0.01) / 0.25).sqrt().clamp(0.1, 10.0);
        chain = run_chain(&target, start.as_vector6(), &cov, scale, n_samples, burn_in, &mut rng)?;
        retuned = true;
        if !(mc.min_acceptance..=mc.max_acceptance).contains(&chain.acceptance) {
            let message = format!("acceptance {:.3} still outside the band after retuning", chain.acceptance);
            log::warn!("{message}");
            warnings.push(message);
        }
    }

    let epoch = model.epoch();
    let window = config.monitoring.window_days;
    let radius = config.monitoring.detection_radius_au;
    let impacts: Vec<bool> = chain
        .states
        .par_iter()
        .map(|x| {
            let orbit = OrbitAtEpoch::from_vector6(x, epoch).expect("chain states are valid orbits");
            match scan_close_approaches_with(&model.state_of(&orbit), window, model.propagator(), radius, true) {
                Ok(records) => records.iter().any(|r| r.impact),
                Err(e) => {
                    log::warn!("Monte Carlo draw could not be propagated: {e}");
                    false
                }
            }
        })
        .collect();
    let flags: Vec<bool> = chain.draws.iter().map(|&i| impacts[i]).collect();
    let hits = flags.iter().filter(|&&f| f).count();
    let mut unique: Vec<usize> = chain.draws.clone();
    unique.dedup();
    Ok(MonteCarloResult {
        impact_probability: hits as f64 / flags.len() as f64,
        standard_error: batch_means(&flags, mc.n_batches),
        n_retained: flags.len(),
        n_unique: unique.len(),
        acceptance: chain.acceptance,
        retuned,
        warnings,
        start,
    })
}
