//! Censored multivariate Gaussian mixture of regressions: E-step with
//! per-component truncated moments, closed-form M-step and multi-start EM.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::CensoredDataset;
use crate::error::{Error, Result};
use crate::estep::{weighted_update, ComponentEngine, RowExpectation};
use crate::linalg::pairwise_sum;
use crate::rng;
use crate::tobit::{EmConfig, EmTrace, RegressionParams};
use crate::truncated_gaussian::QmcConfig;

/// Floor on mixing proportions below which a component counts as collapsed.
pub const OMEGA_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureParams {
    pub omega: Vec<f64>,
    pub components: Vec<RegressionParams>,
}

impl MixtureParams {
    pub fn new(omega: Vec<f64>, components: Vec<RegressionParams>) -> Result<Self> {
        if omega.is_empty() || omega.len() != components.len() {
            return Err(Error::Dimension(format!("{} weights for {} components", omega.len(), components.len())));
        }
        if omega.iter().any(|&w| !(w > 0.0 && w < 1.0 || (omega.len() == 1 && w == 1.0))) {
            return Err(Error::InvalidInput("mixing proportions must lie in (0, 1)".into()));
        }
        if (omega.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput("mixing proportions must sum to one".into()));
        }
        let shape = (components[0].beta.shape(), components[0].sigma.shape());
        if components.iter().any(|c| (c.beta.shape(), c.sigma.shape()) != shape) {
            return Err(Error::Dimension("components have different shapes".into()));
        }
        Ok(Self { omega, components })
    }

    pub fn single(component: RegressionParams) -> Self {
        Self { omega: vec![1.0], components: vec![component] }
    }

    pub fn groups(&self) -> usize {
        self.omega.len()
    }

    /// Reorders components so that new position `k` holds old component `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            omega: perm.iter().map(|&g| self.omega[g]).collect(),
            components: perm.iter().map(|&g| self.components[g].clone()).collect(),
        }
    }
}

/// Number of free parameters: `(G-1) + G (d p + p (p+1) / 2)`.
pub fn n_free_params(groups: usize, d: usize, p: usize) -> usize {
    (groups - 1) + groups * (d * p + p * (p + 1) / 2)
}

/// Posterior membership probabilities, `N x G`.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    pub z: DMatrix<f64>,
}

impl Responsibilities {
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self { z: DMatrix::from_fn(self.z.nrows(), perm.len(), |i, k| self.z[(i, perm[k])]) }
    }
}

/// Per-(row, component) conditional moments from an E-step.
#[derive(Debug, Clone)]
pub struct MomentCache {
    groups: usize,
    cells: Vec<RowExpectation>,
}

impl MomentCache {
    pub fn y_hat(&self, i: usize, g: usize) -> &DVector<f64> {
        &self.cells[i * self.groups + g].y_hat
    }

    pub fn yy_hat(&self, i: usize, g: usize) -> &DMatrix<f64> {
        &self.cells[i * self.groups + g].yy_hat
    }

    /// Log-likelihood of row `i` under component `g` alone.
    pub fn component_loglik(&self, i: usize, g: usize) -> f64 {
        self.cells[i * self.groups + g].loglik
    }

    fn column(&self, g: usize) -> Vec<RowExpectation> {
        self.cells.iter().skip(g).step_by(self.groups).cloned().collect()
    }

    /// Cache of limit-imputed values, as if nothing were censored.
    fn imputed(data: &CensoredDataset, groups: usize) -> Self {
        let mut cells = Vec::with_capacity(data.n() * groups);
        for i in 0..data.n() {
            let y: DVector<f64> = data.y.row(i).transpose();
            let yy = &y * y.transpose();
            for _ in 0..groups {
                cells.push(RowExpectation { loglik: 0.0, y_hat: y.clone(), yy_hat: yy.clone(), degenerate: false, qmc_error: 0.0 });
            }
        }
        Self { groups, cells }
    }
}

#[derive(Debug, Clone)]
pub struct EStep {
    pub resp: Responsibilities,
    pub cache: MomentCache,
    /// Incomplete-data log-likelihood at the parameters used.
    pub loglik: f64,
    pub qmc_error: f64,
    pub ridge_repairs: usize,
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Log-likelihood of observation `i` under a single component.
pub fn component_loglik(comp: &RegressionParams, data: &CensoredDataset, i: usize, qmc: &QmcConfig) -> Result<f64> {
    ComponentEngine::new(comp, data)?.row_loglik(data, i, qmc)
}

pub fn e_step(params: &MixtureParams, data: &CensoredDataset, qmc: &QmcConfig) -> Result<EStep> {
    let groups = params.groups();
    let engines: Vec<ComponentEngine> =
        params.components.iter().map(|c| ComponentEngine::new(c, data)).collect::<Result<_>>()?;
    let log_omega: Vec<f64> = params.omega.iter().map(|w| w.ln()).collect();
    let rows: Vec<(Vec<RowExpectation>, Vec<f64>, f64)> = (0..data.n())
        .into_par_iter()
        .map(|i| {
            let cells: Vec<RowExpectation> = engines.iter().map(|e| e.expectation(data, i, qmc)).collect::<Result<_>>()?;
            if cells.iter().all(|c| c.degenerate) {
                return Err(Error::AllComponentsDegenerate { row: i });
            }
            let joint: Vec<f64> = cells.iter().zip(&log_omega).map(|(c, lw)| c.loglik + lw).collect();
            let total = log_sum_exp(&joint);
            if !total.is_finite() {
                return Err(Error::AllComponentsDegenerate { row: i });
            }
            let z: Vec<f64> = joint.iter().map(|j| (j - total).exp()).collect();
            Ok((cells, z, total))
        })
        .collect::<Result<_>>()?;

    let mut z = DMatrix::zeros(data.n(), groups);
    let mut cells = Vec::with_capacity(data.n() * groups);
    let mut lls = Vec::with_capacity(data.n());
    let mut qmc_error = 0.0;
    for (i, (row_cells, row_z, total)) in rows.into_iter().enumerate() {
        for g in 0..groups {
            z[(i, g)] = row_z[g];
            qmc_error += row_z[g] * row_cells[g].qmc_error;
        }
        cells.extend(row_cells);
        lls.push(total);
    }
    Ok(EStep {
        resp: Responsibilities { z },
        cache: MomentCache { groups, cells },
        loglik: pairwise_sum(&lls),
        qmc_error,
        ridge_repairs: engines.iter().filter(|e| e.repaired).count(),
    })
}

pub fn m_step(resp: &Responsibilities, cache: &MomentCache, data: &CensoredDataset) -> Result<MixtureParams> {
    let (n, groups) = resp.z.shape();
    let floor = (data.d() + 1) as f64;
    let mut omega = Vec::with_capacity(groups);
    let mut components = Vec::with_capacity(groups);
    for g in 0..groups {
        let weights: Vec<f64> = resp.z.column(g).iter().copied().collect();
        let effective: f64 = weights.iter().sum();
        if effective < floor || effective / (n as f64) < OMEGA_FLOOR {
            return Err(Error::ComponentCollapse { component: g, effective_size: effective });
        }
        let (comp, total) = weighted_update(data, &weights, &cache.column(g))
            .map_err(|_| Error::ComponentCollapse { component: g, effective_size: effective })?;
        omega.push(total / n as f64);
        components.push(comp);
    }
    let sum: f64 = omega.iter().sum();
    omega.iter_mut().for_each(|w| *w /= sum);
    Ok(MixtureParams { omega, components })
}

pub fn mixture_loglik(params: &MixtureParams, data: &CensoredDataset, qmc: &QmcConfig) -> Result<f64> {
    let engines: Vec<ComponentEngine> =
        params.components.iter().map(|c| ComponentEngine::new(c, data)).collect::<Result<_>>()?;
    let log_omega: Vec<f64> = params.omega.iter().map(|w| w.ln()).collect();
    let lls: Vec<f64> = (0..data.n())
        .into_par_iter()
        .map(|i| {
            let joint: Vec<f64> =
                engines.iter().zip(&log_omega).map(|(e, lw)| Ok(e.row_loglik(data, i, qmc)? + lw)).collect::<Result<_>>()?;
            Ok(log_sum_exp(&joint))
        })
        .collect::<Result<_>>()?;
    Ok(pairwise_sum(&lls))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InitStrategy {
    /// Rows assigned uniformly at random to groups, then one hard M-step.
    #[default]
    RandomPartition,
    /// k-means on standardized limit-imputed responses.
    KmeansInit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub groups: usize,
    pub em: EmConfig,
    pub n_restarts: usize,
    pub seed: u64,
    pub init: InitStrategy,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { groups: 1, em: EmConfig::default(), n_restarts: 32, seed: 0, init: InitStrategy::RandomPartition }
    }
}

impl FitConfig {
    pub fn with_groups(groups: usize) -> Self {
        Self { groups, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RestartStatus {
    Converged,
    NotConverged,
    Collapsed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub restart: usize,
    pub seed: u64,
    pub status: RestartStatus,
    pub converged: bool,
    /// Absent when the restart failed.
    pub loglik: Option<f64>,
    pub iterations: usize,
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub ridge_repairs: usize,
    /// Components with weight below 1% of the sample.
    pub near_empty_components: Vec<usize>,
    pub n_converged: usize,
    pub n_not_converged: usize,
    pub n_collapsed: usize,
    pub n_failed: usize,
    pub monotonicity_violations: usize,
    pub convergence_criterion: String,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: MixtureParams,
    pub resp: Responsibilities,
    pub trace: EmTrace,
    pub loglik: f64,
    pub n_params: usize,
    pub n_obs: usize,
    pub restart_summaries: Vec<RestartSummary>,
    pub diagnostics: FitDiagnostics,
}

impl FitResult {
    pub fn converged(&self) -> bool {
        self.trace.converged
    }

    pub fn labels(&self) -> Vec<usize> {
        classify(&self.resp)
    }
}

/// Row-wise argmax of the responsibilities (0-based; ties go to the lowest index).
pub fn classify(resp: &Responsibilities) -> Vec<usize> {
    resp.z
        .row_iter()
        .map(|row| {
            let mut best = 0;
            for g in 1..row.len() {
                if row[g] > row[best] {
                    best = g;
                }
            }
            best
        })
        .collect()
}

fn kmeans_labels(data: &CensoredDataset, groups: usize, rng: &mut impl Rng) -> Vec<usize> {
    let (n, p) = data.y.shape();
    let mut y = data.y.clone();
    for j in 0..p {
        let col = y.column(j);
        let mean = col.mean();
        let sd = col.variance().sqrt().max(1e-12);
        y.column_mut(j).apply(|v| *v = (*v - mean) / sd);
    }
    let dist2 = |i: usize, c: &DVector<f64>| (0..p).map(|j| (y[(i, j)] - c[j]).powi(2)).sum::<f64>();
    // k-means++ seeding
    let mut centers: Vec<DVector<f64>> = vec![y.row(rng.random_range(0..n)).transpose()];
    while centers.len() < groups {
        let d: Vec<f64> = (0..n).map(|i| centers.iter().map(|c| dist2(i, c)).fold(f64::INFINITY, f64::min)).collect();
        let total: f64 = d.iter().sum();
        let mut target = rng.random::<f64>() * total;
        let mut pick = n - 1;
        for (i, di) in d.iter().enumerate() {
            target -= di;
            if target <= 0.0 {
                pick = i;
                break;
            }
        }
        centers.push(y.row(pick).transpose());
    }
    let mut labels = vec![0usize; n];
    for _ in 0..100 {
        let mut changed = false;
        for i in 0..n {
            let best = (0..groups).min_by(|&a, &b| dist2(i, &centers[a]).total_cmp(&dist2(i, &centers[b]))).unwrap();
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        for (g, center) in centers.iter_mut().enumerate() {
            let members: Vec<usize> = (0..n).filter(|&i| labels[i] == g).collect();
            if !members.is_empty() {
                *center = members.iter().map(|&i| y.row(i).transpose()).fold(DVector::zeros(p), |a, b| a + b) / members.len() as f64;
            }
        }
        if !changed {
            break;
        }
    }
    labels
}

fn initial_params(data: &CensoredDataset, config: &FitConfig, rng: &mut impl Rng) -> Result<MixtureParams> {
    let groups = config.groups;
    let labels: Vec<usize> = match config.init {
        InitStrategy::RandomPartition => (0..data.n()).map(|_| rng.random_range(0..groups)).collect(),
        InitStrategy::KmeansInit => kmeans_labels(data, groups, rng),
    };
    let z = DMatrix::from_fn(data.n(), groups, |i, g| if labels[i] == g { 1.0 } else { 0.0 });
    m_step(&Responsibilities { z }, &MomentCache::imputed(data, groups), data)
}

struct RunOutcome {
    params: MixtureParams,
    estep: EStep,
    trace: EmTrace,
    ridge_repairs: usize,
}

/// A single EM run started from `params`, returning the final parameters, E-step and trace.
pub fn run_em(data: &CensoredDataset, params: MixtureParams, em: &EmConfig) -> Result<(MixtureParams, EStep, EmTrace)> {
    let out = run_em_inner(data, params, em)?;
    Ok((out.params, out.estep, out.trace))
}

fn run_em_inner(data: &CensoredDataset, mut params: MixtureParams, em: &EmConfig) -> Result<RunOutcome> {
    let mut current = e_step(&params, data, &em.qmc)?;
    let mut ridge_repairs = current.ridge_repairs;
    let mut trace = EmTrace { loglik_per_iter: vec![current.loglik], ..EmTrace::default() };
    for it in 1..=em.max_iter {
        let next = m_step(&current.resp, &current.cache, data)?;
        let next_estep = e_step(&next, data, &em.qmc)?;
        ridge_repairs += next_estep.ridge_repairs;
        trace.record(current.loglik, next_estep.loglik, current.qmc_error + next_estep.qmc_error);
        trace.iterations = it;
        params = next;
        current = next_estep;
        if trace.final_rel_change < em.tol {
            trace.converged = true;
            break;
        }
    }
    Ok(RunOutcome { params, estep: current, trace, ridge_repairs })
}

/// Permutation putting components in canonical order: descending intercept
/// of the first response, ties by descending weight.
pub fn canonical_order(params: &MixtureParams) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..params.groups()).collect();
    perm.sort_by(|&a, &b| {
        let (ca, cb) = (&params.components[a], &params.components[b]);
        cb.beta[(0, 0)]
            .total_cmp(&ca.beta[(0, 0)])
            .then(params.omega[b].total_cmp(&params.omega[a]))
            .then(a.cmp(&b))
    });
    perm
}

pub fn fit_mixture(data: &CensoredDataset, config: &FitConfig) -> Result<FitResult> {
    let groups = config.groups;
    if groups == 0 {
        return Err(Error::InvalidInput("need at least one group".into()));
    }
    if data.n() <= groups * data.d() {
        return Err(Error::InvalidInput(format!("need N > G*d, got N={} G={} d={}", data.n(), groups, data.d())));
    }
    if !(config.em.tol > 0.0) {
        return Err(Error::InvalidInput("tolerance must be positive".into()));
    }
    let restarts = config.n_restarts.max(1);
    let outcomes: Vec<(RestartSummary, Option<RunOutcome>)> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let seed = rng::derive_seed(config.seed, &[r as u64]);
            let mut stream = rng::stream(seed, &[]);
            let run = initial_params(data, config, &mut stream).and_then(|p0| run_em_inner(data, p0, &config.em));
            match run {
                Ok(out) => {
                    let converged = out.trace.converged;
                    let summary = RestartSummary {
                        restart: r,
                        seed,
                        status: if converged { RestartStatus::Converged } else { RestartStatus::NotConverged },
                        converged,
                        loglik: Some(out.estep.loglik),
                        iterations: out.trace.iterations,
                        message: None,
                    };
                    (summary, Some(out))
                }
                Err(e) => {
                    let status = match e {
                        Error::ComponentCollapse { .. } => RestartStatus::Collapsed,
                        _ => RestartStatus::Failed,
                    };
                    let summary = RestartSummary {
                        restart: r,
                        seed,
                        status,
                        converged: false,
                        loglik: None,
                        iterations: 0,
                        message: Some(e.to_string()),
                    };
                    (summary, None)
                }
            }
        })
        .collect();

    let count = |s: RestartStatus| outcomes.iter().filter(|(sum, _)| sum.status == s).count();
    let mut diagnostics = FitDiagnostics {
        n_converged: count(RestartStatus::Converged),
        n_not_converged: count(RestartStatus::NotConverged),
        n_collapsed: count(RestartStatus::Collapsed),
        n_failed: count(RestartStatus::Failed),
        convergence_criterion: format!("relative change in log-likelihood < {:e}", config.em.tol),
        ..FitDiagnostics::default()
    };
    let pick = |want_converged: bool| {
        outcomes
            .iter()
            .enumerate()
            .filter(|(_, (s, o))| o.is_some() && s.converged == want_converged && s.loglik.is_some_and(f64::is_finite))
            .max_by(|(ia, (a, _)), (ib, (b, _))| a.loglik.unwrap().total_cmp(&b.loglik.unwrap()).then(ib.cmp(ia)))
            .map(|(i, _)| i)
    };
    let best = pick(true).or_else(|| pick(false));
    let summaries: Vec<RestartSummary> = outcomes.iter().map(|(s, _)| s.clone()).collect();
    let Some(best) = best else {
        let detail = summaries
            .iter()
            .map(|s| format!("restart {}: {}", s.restart, s.message.as_deref().unwrap_or("no result")))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::FitFailed(detail));
    };
    let mut outcomes = outcomes;
    let out = outcomes.swap_remove(best).1.expect("selected restart has a result");
    let perm = canonical_order(&out.params);
    let params = out.params.permuted(&perm);
    let resp = out.estep.resp.permuted(&perm);
    diagnostics.ridge_repairs = out.ridge_repairs;
    diagnostics.monotonicity_violations = out.trace.monotonicity_violations;
    diagnostics.near_empty_components = (0..groups).filter(|&g| params.omega[g] < 0.01).collect();
    Ok(FitResult {
        loglik: out.estep.loglik,
        n_params: n_free_params(groups, data.d(), data.p()),
        n_obs: data.n(),
        params,
        resp,
        trace: out.trace,
        restart_summaries: summaries,
        diagnostics,
    })
}
