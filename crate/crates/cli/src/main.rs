use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use shortarc::config::Config;
use shortarc::montecarlo::monte_carlo_ip;
use shortarc::mov::{assign_chi, mov_csv, MOVOrbit};
use shortarc::obs::ObservatoryTable;
use shortarc::pipeline::{
    find_nominal, fit_points, is_reliable, load_observations, prepare, run_hazard_pipeline, AttributableSummary,
    FailureReport, PipelineRun, Prepared, RegionSummary, StageError,
};
use shortarc::sampling::{make_cobweb, make_first_grid, samples_csv, CobwebParams, SamplePoint, SamplingMode};
use shortarc::scenario::{far_miss_spec, generate_scenario, grazer_spec, impactor_spec, main_belt_spec, ScenarioSpec};
use shortarc::Error;

#[derive(Parser)]
#[command(name = "shortarc", version, about = "Impact monitoring of short-arc asteroid observations")]
struct Cli {
    /// TOML configuration; missing keys keep their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Seed for scenario noise and the Monte Carlo chain.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Extra observatory codes (MPC `code longitude cos sin` lines).
    #[arg(long, global = true)]
    observatories: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Input {
    /// Observations as MPC 80-column records.
    observations: PathBuf,
    /// Per-observation sigmas: `index sigma_ra_arcsec sigma_dec_arcsec`.
    #[arg(long)]
    weights: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Builtin {
    Impactor,
    Grazer,
    FarMiss,
    MainBelt,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic observation file with its truth.
    Synth {
        /// Built-in scenario, ignored when `--spec` is given.
        #[arg(value_enum, default_value = "grazer")]
        scenario: Builtin,
        /// Scenario description as JSON.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Noise of the main-belt scenario [arcsec].
        #[arg(long, default_value_t = 0.5)]
        noise: f64,
    },
    /// Fit the attributable of the arc.
    Attributable(Input),
    /// Compute the admissible region.
    Ar(Input),
    /// Lay out the sampling points (cobweb or first grid).
    Sample(Input),
    /// Doubly constrained fits at the sampling points.
    Mov(Input),
    /// Run the pipeline and export the close-approach records.
    Monitor(Input),
    /// Run the pipeline and report the impact probability.
    Ip(Input),
    /// Impact probability by Metropolis sampling of the full posterior.
    McOracle {
        #[command(flatten)]
        input: Input,
        /// Chain length; defaults to the configured value.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Full pipeline: report and every CSV sidecar.
    Run(Input),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::Attributable(_) => "attributable",
            Command::Ar(_) => "ar",
            Command::Sample(_) => "sample",
            Command::Mov(_) => "mov",
            Command::Monitor(_) => "monitor",
            Command::Ip(_) => "ip",
            Command::McOracle { .. } => "mc-oracle",
            Command::Run(_) => "run",
        }
    }
}

struct Failure {
    stage: String,
    diagnostic: String,
}

impl From<StageError> for Failure {
    fn from(e: StageError) -> Self {
        let r = FailureReport::from(&e);
        Failure {
            stage: r.stage,
            diagnostic: r.diagnostic,
        }
    }
}

type Outcome<T> = Result<T, Failure>;

trait AtStage<T> {
    fn at(self, stage: &str) -> Outcome<T>;
}

impl<T> AtStage<T> for shortarc::Result<T> {
    fn at(self, stage: &str) -> Outcome<T> {
        self.map_err(|e| Failure {
            stage: stage.into(),
            diagnostic: e.to_string(),
        })
    }
}

struct Context {
    config: Config,
    table: ObservatoryTable,
    out_dir: PathBuf,
    seed: u64,
}

impl Context {
    fn write(&self, name: &str, body: &str) -> Outcome<PathBuf> {
        std::fs::create_dir_all(&self.out_dir).map_err(Error::from).at("output")?;
        let path = self.out_dir.join(name);
        std::fs::write(&path, body).map_err(Error::from).at("output")?;
        Ok(path)
    }

    fn prepared(&self, input: &Input) -> Outcome<Prepared> {
        let obs = load_observations(&input.observations, input.weights.as_deref(), &self.config).at("ingest")?;
        prepare(obs, &self.table, &self.config).at("prepare")
    }

    fn pipeline(&self, input: &Input) -> Outcome<PipelineRun> {
        let obs = load_observations(&input.observations, input.weights.as_deref(), &self.config).at("ingest")?;
        Ok(run_hazard_pipeline(obs, &self.table, &self.config)?)
    }
}

fn load_context(cli: &Cli) -> Outcome<Context> {
    let config = match &cli.config {
        Some(path) => Config::from_file(path).at("config")?,
        None => Config::default(),
    };
    let mut table = ObservatoryTable::default();
    if let Some(path) = &cli.observatories {
        table = table.merged(&ObservatoryTable::from_file(path).at("config")?);
    }
    Ok(Context {
        config,
        table,
        out_dir: cli.out_dir.clone(),
        seed: cli.seed,
    })
}

fn synth(ctx: &Context, scenario: Builtin, spec_path: Option<&Path>, noise: f64) -> Outcome<serde_json::Value> {
    let prop = ctx.config.propagation.propagator();
    let spec: ScenarioSpec = match spec_path {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(Error::from).at("scenario")?;
            let mut spec: ScenarioSpec = serde_json::from_str(&text).map_err(Error::from).at("scenario")?;
            spec.seed = ctx.seed;
            spec
        }
        None => match scenario {
            Builtin::Impactor => impactor_spec(ctx.seed, &prop).at("scenario")?,
            Builtin::Grazer => grazer_spec(ctx.seed, &prop).at("scenario")?,
            Builtin::FarMiss => far_miss_spec(ctx.seed, &prop).at("scenario")?,
            Builtin::MainBelt => main_belt_spec(ctx.seed, noise, &prop),
        },
    };
    let scenario = generate_scenario(&spec, &ctx.table, &prop).at("scenario")?;
    let obs_path = ctx.write(&format!("{}.obs", spec.name), &scenario.mpc_text)?;
    let truth = serde_json::to_string_pretty(&scenario.truth).expect("truth is serializable");
    let truth_path = ctx.write(&format!("{}.truth.json", spec.name), &truth)?;
    Ok(json!({
        "scenario": spec.name,
        "observations": obs_path,
        "truth": truth_path,
        "count": scenario.observations.len(),
    }))
}

/// Cobweb points around a reliable nominal orbit, else the first grid.
fn sampling_points(ctx: &Context, p: &Prepared) -> Outcome<(SamplingMode, Vec<SamplePoint>, Option<shortarc::mov::NominalOrbit>)> {
    let nominal = find_nominal(p, &ctx.config);
    if is_reliable(nominal.as_ref(), p.curvature_snr, &ctx.config) && !ctx.config.pipeline.force_grid {
        let n = nominal.as_ref().expect("reliable implies a nominal");
        if let Ok(params) = CobwebParams::from_covariance(&n.gamma_rho(), n.orbit.range()) {
            let points = make_cobweb(&params, &p.region, &ctx.config.sampling).at("sampling")?;
            return Ok((SamplingMode::Cobweb, points, nominal));
        }
    }
    let (spec, points) = make_first_grid(&p.region, &ctx.config.sampling).at("sampling")?;
    Ok((spec.mode, points, None))
}

fn execute(ctx: &Context, command: &Command) -> Outcome<serde_json::Value> {
    match command {
        Command::Synth { scenario, spec, noise } => synth(ctx, *scenario, spec.as_deref(), *noise),
        Command::Attributable(input) => {
            let p = ctx.prepared(input)?;
            let summary = AttributableSummary::new(&p.attributable, p.fit_rms, p.curvature_snr);
            let body = serde_json::to_string_pretty(&summary).expect("serializable");
            ctx.write("attributable.json", &body)?;
            Ok(serde_json::to_value(summary).expect("serializable"))
        }
        Command::Ar(input) => {
            let p = ctx.prepared(input)?;
            ctx.write("ar_boundary.csv", &p.region.boundary_csv())?;
            let summary = RegionSummary::from(&p.region);
            ctx.write("ar.json", &serde_json::to_string_pretty(&summary).expect("serializable"))?;
            Ok(serde_json::to_value(summary).expect("serializable"))
        }
        Command::Sample(input) => {
            let p = ctx.prepared(input)?;
            let (mode, points, _) = sampling_points(ctx, &p)?;
            ctx.write("samples.csv", &samples_csv(&points))?;
            Ok(json!({
                "mode": mode.name(),
                "points": points.len(),
                "in_region": points.iter().filter(|s| s.in_ar).count(),
            }))
        }
        Command::Mov(input) => {
            let p = ctx.prepared(input)?;
            let (mode, points, nominal) = sampling_points(ctx, &p)?;
            let fits = fit_points(&points, &p.attributable.vector(), &p.model, &ctx.config.fit);
            let mut movs: Vec<MOVOrbit> = fits.into_iter().map(|f| f.1).collect();
            let chi = assign_chi(&mut movs, nominal.as_ref(), p.model.m()).at("chi")?;
            ctx.write("mov.csv", &mov_csv(&movs))?;
            Ok(json!({
                "mode": mode.name(),
                "fits": movs.len(),
                "converged": movs.iter().filter(|m| m.converged).count(),
                "q_star": chi.q_star,
                "best_fit": chi.x_star,
            }))
        }
        Command::Monitor(input) => {
            let run = ctx.pipeline(input)?;
            ctx.write("encounters.csv", &run.artifacts.encounters)?;
            Ok(serde_json::to_value(&run.report.encounters).expect("serializable"))
        }
        Command::Ip(input) => {
            let run = ctx.pipeline(input)?;
            ctx.write("weights.csv", &run.artifacts.weights)?;
            let r = &run.report;
            Ok(json!({
                "impact_probability": r.impact_probability,
                "impact_probability_jeffreys": r.impact_probability_jeffreys,
                "sampling": r.sampling.method,
                "counts": r.counts,
            }))
        }
        Command::McOracle { input, samples } => {
            let obs = load_observations(&input.observations, input.weights.as_deref(), &ctx.config).at("ingest")?;
            let n = samples.unwrap_or(ctx.config.monte_carlo.n_samples);
            let result = monte_carlo_ip(obs, n, ctx.seed, &ctx.table, &ctx.config).at("monte-carlo")?;
            let body = serde_json::to_string_pretty(&result).expect("serializable");
            ctx.write("mc.json", &body)?;
            Ok(serde_json::to_value(result).expect("serializable"))
        }
        Command::Run(input) => {
            let run = ctx.pipeline(input)?;
            run.artifacts.write_to(&ctx.out_dir).at("output")?;
            ctx.write("report.json", &run.report.to_json())?;
            let r = &run.report;
            Ok(json!({
                "impact_probability": r.impact_probability,
                "sampling": r.sampling.method,
                "counts": r.counts,
                "report": ctx.out_dir.join("report.json"),
            }))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = load_context(&cli).and_then(|ctx| execute(&ctx, &cli.command));
    match result {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("serializable"));
            ExitCode::SUCCESS
        }
        Err(f) => {
            let report = FailureReport {
                schema: shortarc::pipeline::REPORT_SCHEMA.into(),
                stage: f.stage,
                diagnostic: f.diagnostic,
            };
            let body = serde_json::to_string_pretty(&report).expect("serializable");
            // best effort: the output directory may be the thing that failed
            if std::fs::create_dir_all(&cli.out_dir).is_ok() {
                let _ = std::fs::write(cli.out_dir.join("failure.json"), &body);
            }
            log::error!("{} failed at stage {}: {}", cli.command.name(), report.stage, report.diagnostic);
            println!("{body}");
            ExitCode::from(2)
        }
    }
}
