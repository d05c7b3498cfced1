//! Single-component multivariate censored (tobit) regression fit by EM.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::CensoredDataset;
use crate::error::{Error, Result};
use crate::estep::{weighted_update, ComponentEngine, RowExpectation};
use crate::linalg::{self, pairwise_sum};
use crate::truncated_gaussian::QmcConfig;

/// Regression coefficients (`d x p`) and error covariance (`p x p`).
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionParams {
    pub beta: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
}

impl RegressionParams {
    pub fn new(beta: DMatrix<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        if sigma.nrows() != beta.ncols() || !sigma.is_square() {
            return Err(Error::Dimension(format!(
                "beta is {}x{} but sigma is {}x{}",
                beta.nrows(),
                beta.ncols(),
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        if !linalg::is_symmetric(&sigma, 1e-12) {
            return Err(Error::InvalidInput("sigma is not symmetric".into()));
        }
        linalg::CholFactor::new(&sigma)?;
        Ok(Self { beta, sigma })
    }

    pub fn mean(&self, x: &DVector<f64>) -> DVector<f64> {
        self.beta.tr_mul(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    /// Relative change of the incomplete-data log-likelihood.
    pub tol: f64,
    pub max_iter: usize,
    pub qmc: QmcConfig,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 500, qmc: QmcConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EmTrace {
    pub loglik_per_iter: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub final_rel_change: f64,
    /// Iterations whose log-likelihood dropped by more than the monotonicity
    /// allowance (`1e-6 |l| + 10 x QMC error`).
    pub monotonicity_violations: usize,
}

impl EmTrace {
    /// Largest single-iteration decrease of the log-likelihood (0 if none).
    pub fn max_decrease(&self) -> f64 {
        self.loglik_per_iter.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max)
    }

    pub(crate) fn record(&mut self, previous: f64, current: f64, qmc_error: f64) {
        self.loglik_per_iter.push(current);
        self.final_rel_change = (current - previous).abs() / previous.abs().max(f64::MIN_POSITIVE);
        let allowance = 1e-6 * previous.abs() + 10.0 * qmc_error;
        if previous - current > allowance {
            self.monotonicity_violations += 1;
            log::debug!("log-likelihood decreased from {previous} to {current}");
        }
    }
}

pub(crate) struct EStepResult {
    pub exps: Vec<RowExpectation>,
    pub loglik: f64,
    pub qmc_error: f64,
}

fn estep_single(params: &RegressionParams, data: &CensoredDataset, qmc: &QmcConfig) -> Result<EStepResult> {
    let engine = ComponentEngine::new(params, data)?;
    let exps: Vec<RowExpectation> =
        (0..data.n()).into_par_iter().map(|i| engine.expectation(data, i, qmc)).collect::<Result<_>>()?;
    if let Some(i) = exps.iter().position(|e| e.degenerate) {
        return Err(Error::AllComponentsDegenerate { row: i });
    }
    let lls: Vec<f64> = exps.iter().map(|e| e.loglik).collect();
    let qmc_error = exps.iter().map(|e| e.qmc_error).sum();
    Ok(EStepResult { loglik: pairwise_sum(&lls), exps, qmc_error })
}

/// Conditional expectations `(E[y_i*], E[y_i* y_i*'])` for observation `i`.
pub fn tobit_estep(
    params: &RegressionParams,
    data: &CensoredDataset,
    i: usize,
    qmc: &QmcConfig,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if i >= data.n() {
        return Err(Error::InvalidInput(format!("row {i} out of range")));
    }
    let e = ComponentEngine::new(params, data)?.expectation(data, i, qmc)?;
    if e.degenerate {
        return Err(Error::DegenerateRegion { mass: e.loglik.exp() });
    }
    Ok((e.y_hat, e.yy_hat))
}

/// Incomplete-data log-likelihood of the censored regression.
pub fn tobit_loglik(params: &RegressionParams, data: &CensoredDataset, qmc: &QmcConfig) -> Result<f64> {
    let engine = ComponentEngine::new(params, data)?;
    let lls: Vec<f64> = (0..data.n()).into_par_iter().map(|i| engine.row_loglik(data, i, qmc)).collect::<Result<_>>()?;
    Ok(pairwise_sum(&lls))
}

/// Least squares on the recorded values (censored entries at their limits).
pub fn ols_init(data: &CensoredDataset) -> Result<RegressionParams> {
    let exps: Vec<RowExpectation> = (0..data.n())
        .map(|i| {
            let y: DVector<f64> = data.y.row(i).transpose();
            RowExpectation { loglik: 0.0, yy_hat: &y * y.transpose(), y_hat: y, degenerate: false, qmc_error: 0.0 }
        })
        .collect();
    let (params, _) = weighted_update(data, &vec![1.0; data.n()], &exps).map_err(|_| Error::RankDeficient)?;
    Ok(params)
}

pub fn fit_tobit(data: &CensoredDataset, config: &EmConfig) -> Result<(RegressionParams, EmTrace)> {
    if data.n() <= data.d() {
        return Err(Error::InvalidInput(format!("need N > d, got N={} d={}", data.n(), data.d())));
    }
    if !(config.tol > 0.0) {
        return Err(Error::InvalidInput("tolerance must be positive".into()));
    }
    if !data.full_column_rank() {
        return Err(Error::RankDeficient);
    }
    let ones = vec![1.0; data.n()];
    let mut params = ols_init(data)?;
    let mut current = estep_single(&params, data, &config.qmc)?;
    let mut trace = EmTrace { loglik_per_iter: vec![current.loglik], ..EmTrace::default() };
    for it in 1..=config.max_iter {
        let (next, _) = weighted_update(data, &ones, &current.exps)?;
        let next_estep = estep_single(&next, data, &config.qmc)?;
        trace.record(current.loglik, next_estep.loglik, current.qmc_error + next_estep.qmc_error);
        trace.iterations = it;
        params = next;
        current = next_estep;
        if trace.final_rel_change < config.tol {
            trace.converged = true;
            break;
        }
    }
    Ok((params, trace))
}
