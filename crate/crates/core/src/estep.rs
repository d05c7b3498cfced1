//! Per-component conditional expectations shared by the single-component
//! and mixture EM, plus the weighted closed-form M-step.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::dataset::CensoredDataset;
use crate::error::{Error, Result};
use crate::linalg::{self, CholFactor};
use crate::rng;
use crate::tobit::RegressionParams;
use crate::truncated_gaussian::{
    centered_cdf, logpdf_with_factor, truncated_moments_unchecked, ConditionalSplit, QmcConfig,
};

/// `E[y*]`, `E[y* y*']` and the log-likelihood contribution of one row
/// under one component.
#[derive(Debug, Clone)]
pub(crate) struct RowExpectation {
    pub loglik: f64,
    pub y_hat: DVector<f64>,
    pub yy_hat: DMatrix<f64>,
    /// Truncation mass fell below the floor; moments are the limit values.
    pub degenerate: bool,
    pub qmc_error: f64,
}

/// A component's covariance pre-split for every censoring pattern present
/// in the data.
pub(crate) struct ComponentEngine<'a> {
    params: &'a RegressionParams,
    splits: HashMap<u32, ConditionalSplit>,
    pub repaired: bool,
}

fn mask_indices(mask: u32, p: usize) -> Vec<usize> {
    (0..p).filter(|&j| mask & (1 << j) != 0).collect()
}

impl<'a> ComponentEngine<'a> {
    pub fn new(params: &'a RegressionParams, data: &CensoredDataset) -> Result<Self> {
        let full = CholFactor::new(&params.sigma)?;
        let p = data.p();
        let mut splits = HashMap::new();
        for mask in data.distinct_masks() {
            splits.insert(mask, ConditionalSplit::new(&params.sigma, mask_indices(mask, p))?);
        }
        Ok(Self { params, splits, repaired: full.repaired })
    }

    fn mean(&self, data: &CensoredDataset, i: usize) -> DVector<f64> {
        self.params.beta.tr_mul(&data.x.row(i).transpose())
    }

    fn pieces(&self, data: &CensoredDataset, i: usize) -> (&ConditionalSplit, DVector<f64>, DVector<f64>, Vec<f64>, Vec<f64>) {
        let split = &self.splits[&data.observed_mask(i)];
        let mu = self.mean(data, i);
        let y_obs = DVector::from_iterator(split.observed.len(), split.observed.iter().map(|&j| data.y[(i, j)]));
        let mut lo = Vec::with_capacity(split.censored.len());
        let mut hi = Vec::with_capacity(split.censored.len());
        for &j in &split.censored {
            let lim = data.limits[j];
            if data.c[(i, j)] < 0 {
                lo.push(f64::NEG_INFINITY);
                hi.push(lim.lower);
            } else {
                lo.push(lim.upper);
                hi.push(f64::INFINITY);
            }
        }
        (split, mu, y_obs, lo, hi)
    }

    fn observed_logpdf(split: &ConditionalSplit, mu: &DVector<f64>, y_obs: &DVector<f64>) -> f64 {
        match &split.observed_factor {
            Some(f) => {
                let mu_o = DVector::from_iterator(split.observed.len(), split.observed.iter().map(|&j| mu[j]));
                logpdf_with_factor(f, &(y_obs - mu_o))
            }
            None => 0.0,
        }
    }

    /// Log of `f(y_o) * P(censored block in its region | y_o)`.
    pub fn row_loglik(&self, data: &CensoredDataset, i: usize, qmc: &QmcConfig) -> Result<f64> {
        let (split, mu, y_obs, lo, hi) = self.pieces(data, i);
        let mut ll = Self::observed_logpdf(split, &mu, &y_obs);
        if !split.censored.is_empty() {
            let cm = split.cond_mean(&mu, &y_obs);
            let lo: Vec<f64> = lo.iter().zip(cm.iter()).map(|(l, m)| l - m).collect();
            let hi: Vec<f64> = hi.iter().zip(cm.iter()).map(|(u, m)| u - m).collect();
            let q = row_qmc(qmc, i);
            ll += centered_cdf(&split.cond_cov, &lo, &hi, &q)?.probability.ln();
        }
        Ok(ll)
    }

    pub fn expectation(&self, data: &CensoredDataset, i: usize, qmc: &QmcConfig) -> Result<RowExpectation> {
        let p = data.p();
        let (split, mu, y_obs, lo, hi) = self.pieces(data, i);
        let logf = Self::observed_logpdf(split, &mu, &y_obs);
        let y_i: DVector<f64> = data.y.row(i).transpose();
        if split.censored.is_empty() {
            let yy = &y_i * y_i.transpose();
            return Ok(RowExpectation { loglik: logf, y_hat: y_i, yy_hat: yy, degenerate: false, qmc_error: 0.0 });
        }
        let cm = split.cond_mean(&mu, &y_obs);
        let q = row_qmc(qmc, i);
        let (m1, m2, mass, qmc_error, degenerate) = match truncated_moments_unchecked(&cm, &split.cond_cov, &lo, &hi, &q) {
            Ok(m) => (m.m1, m.m2, m.mass, m.error_estimate, false),
            Err(Error::DegenerateRegion { mass }) => {
                let m1 = DVector::from_iterator(lo.len(), lo.iter().zip(&hi).map(|(l, u)| if l.is_finite() { *l } else { *u }));
                let m2 = &m1 * m1.transpose();
                (m1, m2, mass, 0.0, true)
            }
            Err(e) => return Err(e),
        };
        let mut y_hat = y_i.clone();
        for (k, &j) in split.censored.iter().enumerate() {
            y_hat[j] = m1[k];
        }
        let mut yy_hat = &y_hat * y_hat.transpose();
        for (a, &ja) in split.censored.iter().enumerate() {
            for (b, &jb) in split.censored.iter().enumerate() {
                yy_hat[(ja, jb)] = m2[(a, b)];
            }
        }
        debug_assert_eq!(yy_hat.nrows(), p);
        Ok(RowExpectation { loglik: logf + mass.ln(), y_hat, yy_hat, degenerate, qmc_error })
    }
}

/// Per-row QMC stream, so results do not depend on evaluation order.
pub(crate) fn row_qmc(qmc: &QmcConfig, row: usize) -> QmcConfig {
    qmc.with_seed(rng::derive_seed(qmc.seed, &[row as u64]))
}

/// Weighted closed-form regression update from conditional expectations.
pub(crate) fn weighted_update(
    data: &CensoredDataset,
    weights: &[f64],
    exps: &[RowExpectation],
) -> Result<(RegressionParams, f64)> {
    let (n, d, p) = (data.n(), data.d(), data.p());
    let mut xtwx = DMatrix::zeros(d, d);
    let mut xtwy = DMatrix::zeros(d, p);
    let mut total = 0.0;
    for i in 0..n {
        let w = weights[i];
        if w == 0.0 {
            continue;
        }
        let xi = data.x.row(i).transpose();
        xtwx += w * &xi * xi.transpose();
        xtwy += w * &xi * exps[i].y_hat.transpose();
        total += w;
    }
    let factor = CholFactor::new(&xtwx).map_err(|_| Error::Singular("weighted X'X".into()))?;
    let beta = factor.solve(&xtwy);
    let mut sigma = DMatrix::zeros(p, p);
    for i in 0..n {
        let w = weights[i];
        if w == 0.0 {
            continue;
        }
        let e = &exps[i];
        let resid = &e.y_hat - beta.tr_mul(&data.x.row(i).transpose());
        sigma += w * (&resid * resid.transpose() + &e.yy_hat - &e.y_hat * e.y_hat.transpose());
    }
    sigma /= total;
    linalg::symmetrize(&mut sigma);
    Ok((RegressionParams { beta, sigma }, total))
}
