use std::path::{Path, PathBuf};

use censgmr::inference::{information_from_scores, score_matrix, stationarity, wald_tests, ParamIndex};
use censgmr::mixture::{fit_mixture, FitConfig, InitStrategy};
use censgmr::selection::{criteria, select_g, EntropyKind};
use censgmr::simulation::{median_ari_replicate, point_correctness_csv, run_comparison, type1_study, Method, ScenarioConfig};
use censgmr::tobit::EmConfig;
use censgmr::truncated_gaussian::{truncated_moments, GaussianParams, QmcConfig, RectRegion};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::io::{self, load_dataset, LoadedData};
use crate::report::{FitReport, CLASSIFICATION_FILE, REPORT_FILE, RESPONSIBILITIES_FILE};

#[derive(Debug, Parser)]
#[command(name = "censgmr", version, about = "Censored multivariate Gaussian mixtures of regressions")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "CENSGMR_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a G-component model and write a report with Wald tests.
    Fit(FitArgs),
    /// Fit a range of G and choose by ICL.
    Select(SelectArgs),
    /// Run simulation replicates of a scenario.
    Simulate(SimulateArgs),
    /// Moments of a truncated multivariate normal.
    Moments(MomentsArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// JSON array of {"name", "lower", "upper"}; null means unbounded.
    #[arg(long)]
    pub limits: Option<PathBuf>,
    /// Response columns, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub responses: Vec<String>,
    /// Numeric predictor columns, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub predictors: Vec<String>,
    /// Do not prepend an intercept column.
    #[arg(long)]
    pub no_intercept: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum InitArg {
    RandomPartition,
    KmeansInit,
}

#[derive(Debug, Args)]
pub struct EmArgs {
    /// JSON with any of tol, max_iter, restarts, seed, init, qmc; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Relative log-likelihood change that stops EM.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long, value_enum)]
    pub init: Option<InitArg>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub restarts: Option<usize>,
    pub seed: Option<u64>,
    pub init: Option<InitStrategy>,
    pub qmc: Option<QmcConfig>,
}

impl EmArgs {
    fn fit_config(&self, groups: usize) -> CliResult<FitConfig> {
        let file: RunConfig = match &self.config {
            Some(path) => io::read_json(path)?,
            None => RunConfig::default(),
        };
        let defaults = FitConfig::default();
        let em = EmConfig {
            tol: self.tol.or(file.tol).unwrap_or(defaults.em.tol),
            max_iter: self.max_iter.or(file.max_iter).unwrap_or(defaults.em.max_iter),
            qmc: file.qmc.unwrap_or(defaults.em.qmc),
        };
        if !(em.tol > 0.0) {
            return Err(CliError::Input("--tol must be positive".into()));
        }
        let init = match self.init {
            Some(InitArg::RandomPartition) => InitStrategy::RandomPartition,
            Some(InitArg::KmeansInit) => InitStrategy::KmeansInit,
            None => file.init.unwrap_or(defaults.init),
        };
        let n_restarts = self.restarts.or(file.restarts).unwrap_or(defaults.n_restarts);
        if n_restarts == 0 {
            return Err(CliError::Input("--restarts must be at least 1".into()));
        }
        Ok(FitConfig { groups, em, n_restarts, seed: self.seed.or(file.seed).unwrap_or(defaults.seed), init })
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub groups: usize,
    #[command(flatten)]
    pub em: EmArgs,
    /// Output directory for report.json, responsibilities.csv and classification.csv.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EntropyArg {
    Posterior,
    Hard,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 1)]
    pub gmin: usize,
    #[arg(long)]
    pub gmax: usize,
    /// Entropy term of ICL.
    #[arg(long, value_enum, default_value = "posterior")]
    pub entropy: EntropyArg,
    #[command(flatten)]
    pub em: EmArgs,
    /// Selection table CSV (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// `I`, `II`, or a scenario JSON file.
    #[arg(long)]
    pub scenario: String,
    #[arg(long, default_value_t = 25)]
    pub reps: usize,
    #[arg(long, value_delimiter = ',', default_value = "cens-gmr,ignore-gmr,delete-gmr,cens-gmm")]
    pub methods: Vec<String>,
    /// Master seed (overrides the scenario's).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Sample size per replicate (overrides the scenario's).
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Run the Wald rejection-rate study instead of the method comparison.
    #[arg(long)]
    pub type1: bool,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Summary CSV (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-replicate CSV.
    #[arg(long)]
    pub replicates_out: Option<PathBuf>,
    /// Per-point correctness of the median-ARI replicate.
    #[arg(long)]
    pub median_dump: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MomentsArgs {
    /// Comma-separated mean vector.
    #[arg(long, allow_hyphen_values = true)]
    pub mean: String,
    /// Covariance rows separated by ';', entries by ','.
    #[arg(long, allow_hyphen_values = true)]
    pub cov: String,
    /// Lower bounds (`-inf` for none); default unbounded.
    #[arg(long, allow_hyphen_values = true)]
    pub lower: Option<String>,
    /// Upper bounds (`inf` for none); default unbounded.
    #[arg(long, allow_hyphen_values = true)]
    pub upper: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub shifts: Option<usize>,
}

pub fn run(cli: Cli) -> CliResult<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::Input("--threads must be at least 1".into()));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            log::warn!("thread pool already initialized: {e}");
        }
    }
    match cli.command {
        Command::Fit(args) => cmd_fit(&args),
        Command::Select(args) => cmd_select(&args),
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Moments(args) => cmd_moments(&args),
    }
}

fn load(args: &DataArgs) -> CliResult<LoadedData> {
    let loaded = load_dataset(&args.data, args.limits.as_deref(), &args.responses, &args.predictors, !args.no_intercept)?;
    for c in &loaded.censoring {
        log::info!("{}: {} left-censored, {} right-censored", c.response, c.left, c.right);
    }
    Ok(loaded)
}

fn emit(out: Option<&Path>, contents: &str) -> CliResult<()> {
    match out {
        Some(path) => io::write_file(path, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

pub fn cmd_fit(args: &FitArgs) -> CliResult<()> {
    if args.groups == 0 {
        return Err(CliError::Input("--groups must be at least 1".into()));
    }
    let config = args.em.fit_config(args.groups)?;
    let loaded = load(&args.data)?;
    let data = &loaded.data;
    let fit = fit_mixture(data, &config).map_err(|e| match e {
        censgmr::Error::FitFailed(detail) => CliError::Numerical(format!("fit failed: {detail}")),
        other => other.into(),
    })?;
    if !fit.converged() {
        log::warn!("no restart converged; reporting the best non-converged run");
    }
    let scores = score_matrix(&fit.params, data, &config.em.qmc)?;
    let info = information_from_scores(&scores, ParamIndex::for_params(&fit.params));
    let wald = wald_tests(&fit.params, &info, data.intercept)?;
    let crit = criteria(fit.loglik, fit.n_params, data.n(), &fit.resp, EntropyKind::Posterior);
    let report = FitReport::build(&loaded, &fit, &wald, crit, stationarity(&scores));

    std::fs::create_dir_all(&args.out).map_err(|e| CliError::io(format!("cannot create {}", args.out.display()), e))?;
    io::write_file(&args.out.join(REPORT_FILE), &report.to_json())?;
    io::write_file(&args.out.join(RESPONSIBILITIES_FILE), &io::responsibilities_csv(&fit.resp))?;
    io::write_file(&args.out.join(CLASSIFICATION_FILE), &io::classification_csv(&fit.labels(), &fit.resp))?;
    print!("{}", report.render());
    Ok(())
}

pub fn cmd_select(args: &SelectArgs) -> CliResult<()> {
    if args.gmin == 0 || args.gmin > args.gmax {
        return Err(CliError::Input(format!("invalid range --gmin {} --gmax {}", args.gmin, args.gmax)));
    }
    let config = args.em.fit_config(args.gmin)?;
    let loaded = load(&args.data)?;
    let kind = match args.entropy {
        EntropyArg::Posterior => EntropyKind::Posterior,
        EntropyArg::Hard => EntropyKind::HardAssignment,
    };
    let range: Vec<usize> = (args.gmin..=args.gmax).collect();
    let selection = select_g(&loaded.data, &range, &config, kind).map_err(|e| match e {
        censgmr::Error::FitFailed(detail) => CliError::Numerical(detail),
        other => other.into(),
    })?;
    emit(args.out.as_deref(), &selection.table.to_csv())?;
    println!("chosen G = {}", selection.table.chosen());
    Ok(())
}

fn scenario(spec: &str) -> CliResult<ScenarioConfig> {
    match spec {
        "I" | "i" | "1" => Ok(ScenarioConfig::scenario_i()),
        "II" | "ii" | "2" => Ok(ScenarioConfig::scenario_ii()),
        path => {
            let sc: ScenarioConfig = io::read_json(Path::new(path))?;
            sc.validate()?;
            Ok(sc)
        }
    }
}

pub fn cmd_simulate(args: &SimulateArgs) -> CliResult<()> {
    let mut sc = scenario(&args.scenario)?;
    if let Some(seed) = args.seed {
        sc.seed = seed;
    }
    if let Some(n) = args.n {
        sc.n = n;
    }
    if args.reps == 0 {
        return Err(CliError::Input("--reps must be at least 1".into()));
    }
    let defaults = FitConfig::default();
    let config = FitConfig {
        groups: sc.groups(),
        n_restarts: args.restarts.unwrap_or(defaults.n_restarts).max(1),
        em: EmConfig { tol: args.tol.unwrap_or(defaults.em.tol), max_iter: args.max_iter.unwrap_or(defaults.em.max_iter), ..defaults.em },
        ..defaults
    };
    if args.type1 {
        let table = type1_study(&sc, args.reps, &config, args.alpha)?;
        if table.n_failed > 0 {
            log::warn!("{} replicate(s) failed and were excluded", table.n_failed);
        }
        return emit(args.out.as_deref(), &table.to_csv());
    }
    let methods: Vec<Method> = args.methods.iter().map(|m| m.parse()).collect::<Result<_, _>>()?;
    let comparison = run_comparison(&sc, args.reps, &methods, &config)?;
    for r in comparison.replicates.iter().filter(|r| r.error.is_some()) {
        log::warn!("replicate {} ({}): {}", r.replicate, r.method.name(), r.error.as_deref().unwrap_or(""));
    }
    emit(args.out.as_deref(), &comparison.summary_csv())?;
    if let Some(path) = &args.replicates_out {
        io::write_file(path, &comparison.replicate_csv())?;
    }
    if let Some(path) = &args.median_dump {
        let method = methods.iter().copied().find(|&m| m != Method::DeleteGmr).ok_or_else(|| {
            CliError::Input("--median-dump needs a method that classifies every row".into())
        })?;
        let rep = median_ari_replicate(&comparison, method).ok_or_else(|| CliError::Numerical("no replicate produced an ARI".into()))?;
        io::write_file(path, &point_correctness_csv(&sc, rep)?)?;
    }
    Ok(())
}

fn parse_list(raw: &str, what: &str) -> CliResult<Vec<f64>> {
    raw.split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<f64>().ok().filter(|v| !v.is_nan()).ok_or_else(|| CliError::Input(format!("{what}: '{t}' is not a number")))
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct MomentsOutput {
    m1: Vec<f64>,
    m2: Vec<Vec<f64>>,
    mass: f64,
    error_estimate: f64,
}

pub fn cmd_moments(args: &MomentsArgs) -> CliResult<()> {
    let mean = parse_list(&args.mean, "--mean")?;
    let p = mean.len();
    let rows: Vec<Vec<f64>> = args.cov.split(';').map(|r| parse_list(r, "--cov")).collect::<CliResult<_>>()?;
    if rows.len() != p || rows.iter().any(|r| r.len() != p) {
        return Err(CliError::Input(format!("--cov must be {p}x{p}")));
    }
    let bound = |raw: &Option<String>, fill: f64, what: &str| -> CliResult<Vec<f64>> {
        let v = match raw {
            Some(s) => parse_list(s, what)?,
            None => vec![fill; p],
        };
        if v.len() != p {
            return Err(CliError::Input(format!("{what} has {} entries, expected {p}", v.len())));
        }
        Ok(v)
    };
    let lower = bound(&args.lower, f64::NEG_INFINITY, "--lower")?;
    let upper = bound(&args.upper, f64::INFINITY, "--upper")?;
    let params = GaussianParams::new(DVector::from_vec(mean), DMatrix::from_fn(p, p, |i, j| rows[i][j]))?;
    let region = RectRegion::new(lower, upper)?;
    let defaults = QmcConfig::default();
    let qmc = QmcConfig {
        points_per_shift: args.points.unwrap_or(defaults.points_per_shift),
        shifts: args.shifts.unwrap_or(defaults.shifts),
        seed: args.seed,
    };
    let m = truncated_moments(&params, &region, &qmc)?;
    let out = MomentsOutput {
        m1: m.m1.iter().copied().collect(),
        m2: m.m2.row_iter().map(|r| r.iter().copied().collect()).collect(),
        mass: m.mass,
        error_estimate: m.error_estimate,
    };
    println!("{}", serde_json::to_string_pretty(&out).expect("serializable"));
    Ok(())
}
