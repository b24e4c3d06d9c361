//! The `epistate` command line: `simulate`, `fit`, `summarize`, `validate`.
//!
//! Every command reads one JSON [`RunConfig`]. Values come from the built-in
//! defaults, then the `--config` file, then the `--seed` / `--out` flags, each
//! layer overriding the one before. Output layout under the output directory:
//!
//! ```text
//! data/     cases.csv mobility.csv regions.json truth.csv generating_params.json config.json
//! fit/      draws.csv diagnostics.json bundle.json priors.json config.json
//! summary/  r0e.csv psi.csv ... posterior_predictive.csv config.json
//! ```
//!
//! Exit codes: 0 success, 2 invalid configuration or failed validation,
//! 3 data or I/O error, 4 sampler error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use chrono::{Days, NaiveDate};
use clap::{Args, Parser, Subcommand};
use log::info;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{write_summaries, Posterior};
use crate::basis::{self, Design};
use crate::ingest::{self, IngestError, IngestOptions, Metric, RegionManifest, TimeSeriesBundle};
use crate::likelihood::{EpiModel, EpiParams, LikelihoodError, PriorConfig};
use crate::model;
use crate::sampler::{run_nuts, DiagnosticsReport, PosteriorDraws, SamplerConfig, SamplerError};
use crate::scenario::Scenario;
use crate::stochastic::{stream_rng, SyntheticEpidemic};
use crate::validate;

pub const SCHEMA_VERSION: u32 = 1;

/// Covariate carried by simulated data.
pub const SYNTHETIC_METRIC: Metric = Metric::FullTimeWork;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{0} validation check(s) failed")]
    Validation(usize),
    #[error("data: {0}")]
    Data(String),
    #[error("sampler: {0}")]
    Sampler(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Validation(_) => 2,
            CliError::Data(_) => 3,
            CliError::Sampler(_) => 4,
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::InvalidOption(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<LikelihoodError> for CliError {
    fn from(e: LikelihoodError) -> Self {
        match e {
            LikelihoodError::InvalidPrior(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

/// Where the observed data come from. With no `cases` path the files written
/// by `simulate` under `<out>/data/` are used.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub cases: Option<PathBuf>,
    pub mobility: Option<PathBuf>,
    /// Region id to population JSON.
    pub manifest: Option<PathBuf>,
    pub region: Option<String>,
    /// Region whose total case count sets the prior scale ratio. When given
    /// it replaces `priors.scale_ratio`.
    pub scale_reference: Option<String>,
    pub ingest: IngestOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Basis functions of the transmission spline.
    pub df_beta: usize,
    /// Basis functions of the death-fraction spline.
    pub df_omega: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            df_beta: 10,
            df_omega: 5,
        }
    }
}

/// Synthetic epidemic for `simulate`. Process noise comes from
/// `priors.noise`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub region: String,
    /// First modeled day.
    pub start_date: NaiveDate,
    pub n_days: usize,
    pub population: u64,
    pub i_d0: u64,
    /// Generating parameters; the built-in desk-scale scenario when absent.
    /// The noise vectors are redrawn.
    pub params: Option<EpiParams>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            region: "synthetic".into(),
            start_date: NaiveDate::from_ymd_opt(2020, 3, 15).expect("valid date"),
            n_days: 90,
            population: 100_000,
            i_d0: 20,
            params: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Seeds the simulation (stream 0) and the sampler chains (streams 1..).
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    /// Worker threads for parallel chains; the rayon default when absent.
    #[serde(default)]
    pub threads: Option<usize>,
    /// Include wall-clock time in diagnostics.json. Off by default so
    /// repeated runs give identical files.
    #[serde(default)]
    pub record_runtime: bool,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub priors: PriorConfig,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
}

fn default_seed() -> u64 {
    1
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            seed: default_seed(),
            out_dir: default_out(),
            threads: None,
            record_runtime: false,
            data: DataConfig::default(),
            model: ModelConfig::default(),
            priors: PriorConfig::default(),
            sampler: SamplerConfig::default(),
            simulation: SimulationConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<RunConfig, CliError> {
        let config: RunConfig =
            serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if config.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                config.schema_version
            )));
        }
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<RunConfig, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        RunConfig::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("config serializes");
        text.push('\n');
        text
    }

    /// Defaults, then the file, then the flags.
    pub fn resolve(path: Option<&Path>, seed: Option<u64>, out: Option<&Path>) -> Result<RunConfig, CliError> {
        let mut config = match path {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = seed {
            config.seed = seed;
        }
        if let Some(out) = out {
            config.out_dir = out.to_owned();
        }
        config.sampler.seed = config.seed;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        let m = &self.model;
        if m.df_beta < 2 || m.df_omega < 2 {
            return bad(format!(
                "df_beta and df_omega must be at least 2, got {} and {}",
                m.df_beta, m.df_omega
            ));
        }
        let s = &self.simulation;
        if s.n_days <= m.df_beta.max(m.df_omega) {
            return bad(format!(
                "simulation.n_days = {} must exceed both spline dfs",
                s.n_days
            ));
        }
        if s.i_d0 == 0 {
            return bad("simulation.i_d0 must be at least 1".into());
        }
        self.sampler
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.priors.validate()?;
        self.priors.noise.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.data.ingest.validate()?;
        Ok(())
    }

    pub fn data_dir(&self) -> PathBuf {
        self.out_dir.join("data")
    }

    pub fn fit_dir(&self) -> PathBuf {
        self.out_dir.join("fit")
    }

    pub fn summary_dir(&self) -> PathBuf {
        self.out_dir.join("summary")
    }

    /// The scenario `simulate` draws from.
    pub fn scenario(&self) -> Scenario {
        let s = &self.simulation;
        let mut scenario = Scenario::with_design(s.n_days, self.model.df_beta, self.model.df_omega);
        scenario.population = s.population as f64;
        scenario.i_d0 = s.i_d0 as f64;
        scenario.noise = self.priors.noise;
        if let Some(params) = &s.params {
            scenario.params = params.clone();
        }
        scenario
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| io_error(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    write_text(path, &text)
}

/// Latent truth, one row per model day. Day 0 is the initial state and has
/// no flows.
fn write_truth_csv(
    path: &Path,
    start: NaiveDate,
    design: &Design,
    sim: &SyntheticEpidemic,
) -> Result<(), CliError> {
    let mut out = String::from(
        "date,day,s,e,i_u,r_u,i_d,u_d,r_d,d_d,total,mu_cases,mu_deaths,eps_c,eps_d,r0e,psi,observed_cases,observed_deaths\n",
    );
    let p = &sim.true_params;
    for (day, state) in sim.states.iter().enumerate() {
        let date = start - Days::new(1) + Days::new(day as u64);
        let a = state.as_array();
        out.push_str(&format!(
            "{date},{day},{},{},{},{},{},{},{},{},{}",
            a[0], a[1], a[2], a[3], a[4], a[5], a[6], a[7],
            state.total()
        ));
        if day == 0 {
            out.push_str(",,,,,,,,\n");
            continue;
        }
        let t = day - 1;
        let rates = design.rates(t, p).map_err(|e| CliError::Config(e.to_string()))?;
        let r0e = model::r0e(&rates, p.eps_c[t]).map_err(|e| CliError::Config(e.to_string()))?;
        out.push_str(&format!(
            ",{},{},{},{},{},{},{},{}\n",
            sim.mu_c[t],
            sim.mu_d[t],
            p.eps_c[t],
            p.eps_d[t],
            r0e,
            basis::psi(t as f64, &p.detection),
            sim.observed_cases[t],
            sim.observed_deaths[t]
        ));
    }
    write_text(path, &out)
}

/// Draws a synthetic epidemic and writes it in the ingest formats plus the
/// latent truth.
pub fn cmd_simulate(config: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let scenario = config.scenario();
    let design = scenario.design().map_err(|e| CliError::Config(e.to_string()))?;
    let mut rng = stream_rng(config.seed, 0);
    let sim = scenario
        .simulate(&mut rng)
        .map_err(|e| CliError::Config(e.to_string()))?;

    let dir = config.data_dir();
    create_dir(&dir)?;
    let s = &config.simulation;
    let files: Vec<PathBuf> = [
        "cases.csv",
        "mobility.csv",
        "regions.json",
        "truth.csv",
        "generating_params.json",
        "config.json",
    ]
    .iter()
    .map(|f| dir.join(f))
    .collect();
    ingest::write_cases_csv(
        &files[0],
        &s.region,
        s.start_date,
        s.i_d0,
        &sim.observed_cases,
        &sim.observed_deaths,
    )?;
    let series: Vec<(Metric, Vec<f64>)> = scenario
        .covariates
        .iter()
        .map(|c| (SYNTHETIC_METRIC, c.clone()))
        .collect();
    ingest::write_mobility_csv(&files[1], &s.region, s.start_date, &series)?;
    RegionManifest([(s.region.clone(), s.population)].into_iter().collect()).write_json(&files[2])?;
    write_truth_csv(&files[3], s.start_date, &design, &sim)?;
    write_json(&files[4], &sim.true_params)?;
    write_text(&files[5], &config.to_json())?;
    info!("simulated {} days into {}", s.n_days, dir.display());
    Ok(files)
}

/// Input files, region and ingest options `fit` will use.
struct DataSource {
    cases: PathBuf,
    mobility: PathBuf,
    manifest: PathBuf,
    region: String,
    options: IngestOptions,
}

fn data_source(config: &RunConfig) -> Result<DataSource, CliError> {
    let d = &config.data;
    match &d.cases {
        Some(cases) => {
            let need = |p: &Option<PathBuf>, what: &str| {
                p.clone()
                    .ok_or_else(|| CliError::Config(format!("data.{what} is required with data.cases")))
            };
            Ok(DataSource {
                cases: cases.clone(),
                mobility: need(&d.mobility, "mobility")?,
                manifest: need(&d.manifest, "manifest")?,
                region: d
                    .region
                    .clone()
                    .ok_or_else(|| CliError::Config("data.region is required with data.cases".into()))?,
                options: d.ingest.clone(),
            })
        }
        None => {
            let dir = config.data_dir();
            Ok(DataSource {
                cases: dir.join("cases.csv"),
                mobility: dir.join("mobility.csv"),
                manifest: dir.join("regions.json"),
                region: config.simulation.region.clone(),
                // Simulated counts start on the simulation start date and the
                // covariate is already standardized and smooth.
                options: IngestOptions {
                    start_date: Some(config.simulation.start_date),
                    max_days: None,
                    bandwidth_days: None,
                    metrics: vec![SYNTHETIC_METRIC],
                    ..IngestOptions::default()
                },
            })
        }
    }
}

/// Loads the data, fits the model and writes draws and diagnostics.
pub fn cmd_fit(config: &RunConfig) -> Result<DiagnosticsReport, CliError> {
    let source = data_source(config)?;
    let manifest = RegionManifest::from_json(&source.manifest)?;
    let population = manifest.population(&source.region, &source.manifest)?;
    let bundle = ingest::load_region(
        &source.cases,
        &source.mobility,
        &source.region,
        population,
        &source.options,
    )?;
    let mut priors = config.priors.clone();
    if let Some(reference) = &config.data.scale_reference {
        let own = ingest::total_cases(&source.cases, &source.region)?;
        let other = ingest::total_cases(&source.cases, reference)?;
        if other == 0 {
            return Err(CliError::Data(format!("reference region '{reference}' has no cases")));
        }
        priors.scale_ratio = own as f64 / other as f64;
        info!("prior scale ratio {} from reference '{reference}'", priors.scale_ratio);
    }
    let design = Design::new(
        bundle.n_days(),
        config.model.df_beta,
        config.model.df_omega,
        bundle.covariate_series(),
    )
    .map_err(|e| CliError::Config(e.to_string()))?;
    let model = EpiModel::new(bundle.observations(), design, &priors)?;

    let dir = config.fit_dir();
    create_dir(&dir)?;
    let mut resolved = config.clone();
    resolved.priors = priors.clone();
    write_text(&dir.join("config.json"), &resolved.to_json())?;
    write_json(&dir.join("priors.json"), &priors.resolved()?)?;
    bundle.write_json(&dir.join("bundle.json"))?;

    let sampler = SamplerConfig {
        seed: config.seed,
        ..config.sampler.clone()
    };
    let started = Instant::now();
    let result = match config.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(e.to_string()))?
            .install(|| run_nuts(&model, &sampler)),
        None => run_nuts(&model, &sampler),
    };
    let runtime = config.record_runtime.then(|| started.elapsed().as_secs_f64());
    let diagnostics_path = dir.join("diagnostics.json");
    let draws = match result {
        Ok(d) => d,
        Err(e) => {
            #[derive(Serialize)]
            struct Failure<'a> {
                error: String,
                config: &'a SamplerConfig,
            }
            write_json(
                &diagnostics_path,
                &Failure {
                    error: e.to_string(),
                    config: &sampler,
                },
            )?;
            return Err(CliError::Sampler(e.to_string()));
        }
    };
    let sampler_error = |e: SamplerError| CliError::Sampler(e.to_string());
    draws.write_csv(&dir.join("draws.csv")).map_err(sampler_error)?;
    let report = DiagnosticsReport::new(&draws, &sampler, runtime).map_err(sampler_error)?;
    report.write_json(&diagnostics_path).map_err(sampler_error)?;
    info!(
        "fit done: {} divergences, R-hat <= 1.05 for {:.1}% of parameters",
        report.divergences,
        100.0 * report.fraction_rhat_below(1.05)
    );
    Ok(report)
}

/// Turns the artifacts of `fit` into the summary CSVs.
pub fn cmd_summarize(config: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let fit_dir = config.fit_dir();
    let need = |name: &str| {
        let p = fit_dir.join(name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(CliError::Data(format!("missing fit artifact {}", p.display())))
        }
    };
    let fit_config = RunConfig::from_file(&need("config.json")?)?;
    let bundle = TimeSeriesBundle::from_json(&need("bundle.json")?)?;
    let draws_path = need("draws.csv")?;
    let draws = PosteriorDraws::read_csv(&draws_path).map_err(|e| io_error(&draws_path, e))?;
    let design = Design::new(
        bundle.n_days(),
        fit_config.model.df_beta,
        fit_config.model.df_omega,
        bundle.covariate_series(),
    )
    .map_err(|e| CliError::Config(e.to_string()))?;
    let labels = bundle.covariates.iter().map(|c| c.metric.to_string()).collect();
    let post = Posterior::new(&draws, design, bundle.dates.clone())
        .map_err(|e| CliError::Data(e.to_string()))?
        .with_covariate_labels(labels);

    let dir = config.summary_dir();
    create_dir(&dir)?;
    let mut files = write_summaries(&post, &bundle.observations(), &dir)
        .map_err(|e| CliError::Data(e.to_string()))?;
    let config_path = dir.join("config.json");
    write_text(&config_path, &fit_config.to_json())?;
    files.push(config_path);
    Ok(files)
}

/// Runs the invariant suite, prints one line per check and optionally writes
/// `validate.json` into `out`.
pub fn cmd_validate(seed: u64, out: Option<&Path>) -> Result<Vec<validate::CheckResult>, CliError> {
    let results = validate::run_all(seed);
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    for (r, secs) in &results {
        let mark = if r.passed { "PASS" } else { "FAIL" };
        let _ = writeln!(w, "{mark} {:<22} {:>7.2}s  {}", r.name, secs, r.detail);
    }
    let checks: Vec<validate::CheckResult> = results.into_iter().map(|(r, _)| r).collect();
    if let Some(dir) = out {
        create_dir(dir)?;
        write_json(&dir.join("validate.json"), &checks)?;
    }
    let failed = checks.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(CliError::Validation(failed));
    }
    Ok(checks)
}

#[derive(Debug, Parser)]
#[command(name = "epistate", version, about = "Epidemic state-space model: simulate, fit, summarize, validate")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic epidemic into <out>/data.
    Simulate(CommonArgs),
    /// Fit the model and write draws and diagnostics into <out>/fit.
    Fit(CommonArgs),
    /// Summarize <out>/fit into <out>/summary.
    Summarize(CommonArgs),
    /// Run the fast invariant checks.
    Validate(CommonArgs),
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let resolve = |a: &CommonArgs| RunConfig::resolve(a.config.as_deref(), a.seed, a.out.as_deref());
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&resolve(&a)?).map(|_| ()),
        Command::Fit(a) => cmd_fit(&resolve(&a)?).map(|_| ()),
        Command::Summarize(a) => cmd_summarize(&resolve(&a)?).map(|_| ()),
        Command::Validate(a) => {
            let config = resolve(&a)?;
            cmd_validate(config.seed, a.out.as_deref()).map(|_| ())
        }
    }
}

/// Entry point of the binary.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let config = RunConfig::default();
        assert_eq!(RunConfig::from_json(&config.to_json()).unwrap(), config);
    }

    #[test]
    fn schema_version_is_required() {
        assert!(RunConfig::from_json("{}").is_err());
        assert!(RunConfig::from_json(r#"{"schema_version": 2}"#).is_err());
        let c = RunConfig::from_json(r#"{"schema_version": 1}"#).unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"schema_version": 1, "seed": 5, "out_dir": "a", "sampler": {"n_chains": 2}}"#)
            .unwrap();
        let c = RunConfig::resolve(Some(&path), None, None).unwrap();
        assert_eq!((c.seed, c.out_dir.as_path(), c.sampler.n_chains), (5, Path::new("a"), 2));
        assert_eq!(c.sampler.seed, 5);
        let c = RunConfig::resolve(Some(&path), Some(9), Some(Path::new("b"))).unwrap();
        assert_eq!((c.seed, c.out_dir.as_path(), c.sampler.seed), (9, Path::new("b"), 9));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let e = RunConfig::from_json(r#"{"schema_version": 1, "sead": 3}"#).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn defaults_match_the_published_setup() {
        let c = RunConfig::default();
        assert_eq!((c.model.df_beta, c.model.df_omega), (10, 5));
        assert_eq!((c.priors.noise.v_c, c.priors.noise.v_d), (0.1, 0.1));
        assert_eq!((c.sampler.n_chains, c.sampler.n_warmup), (4, 1000));
    }

    #[test]
    fn simulated_truth_conserves_population() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = RunConfig::default();
        c.out_dir = dir.path().to_owned();
        c.simulation.n_days = 40;
        cmd_simulate(&c).unwrap();
        let text = fs::read_to_string(dir.path().join("data/truth.csv")).unwrap();
        let mut rows = 0;
        for line in text.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            let sum: f64 = f[2..10].iter().map(|x| x.parse::<f64>().unwrap()).sum();
            assert!((sum - 1e5).abs() < 1e-7, "{line}");
            rows += 1;
        }
        assert_eq!(rows, 41);
    }

    #[test]
    fn missing_fit_artifacts_are_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = RunConfig::default();
        c.out_dir = dir.path().to_owned();
        assert_eq!(cmd_summarize(&c).unwrap_err().exit_code(), 3);
    }
}
