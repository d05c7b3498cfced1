//! Wald inference from the empirical outer product of per-observation
//! complete-data scores evaluated at the fitted parameters.

use std::f64::consts::SQRT_2;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::CensoredDataset;
use crate::error::{Error, Result};
use crate::linalg::{self, CholFactor};
use crate::mixture::{e_step, n_free_params, MixtureParams, MomentCache, Responsibilities};
use crate::truncated_gaussian::QmcConfig;

/// Position of every free parameter in the stacked vector: the first `G-1`
/// mixing proportions, then per component `beta` (column-major, entry
/// `(r, j)` at `j*d + r`) followed by `vech(Sigma)` (column-major lower
/// triangle).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamIndex {
    pub groups: usize,
    pub d: usize,
    pub p: usize,
}

impl ParamIndex {
    pub fn new(groups: usize, d: usize, p: usize) -> Self {
        Self { groups, d, p }
    }

    pub fn for_params(params: &MixtureParams) -> Self {
        let beta = &params.components[0].beta;
        Self::new(params.groups(), beta.nrows(), beta.ncols())
    }

    pub fn len(&self) -> usize {
        n_free_params(self.groups, self.d, self.p)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn block(&self) -> usize {
        self.d * self.p + linalg::vech_len(self.p)
    }

    fn component_offset(&self, g: usize) -> usize {
        self.groups - 1 + g * self.block()
    }

    pub fn omega(&self, g: usize) -> usize {
        assert!(g + 1 < self.groups, "omega index {g} is not free");
        g
    }

    pub fn beta(&self, g: usize, r: usize, j: usize) -> usize {
        self.component_offset(g) + j * self.d + r
    }

    /// Index of `Sigma_g[(a, b)]` for `a >= b`.
    pub fn sigma(&self, g: usize, a: usize, b: usize) -> usize {
        let (a, b) = if a >= b { (a, b) } else { (b, a) };
        let k = linalg::vech_pairs(self.p).iter().position(|&pair| pair == (a, b)).expect("valid entry");
        self.component_offset(g) + self.d * self.p + k
    }

    /// Stacks parameters in this layout.
    pub fn flatten(&self, params: &MixtureParams) -> DVector<f64> {
        let mut v = DVector::zeros(self.len());
        for g in 0..self.groups - 1 {
            v[g] = params.omega[g];
        }
        for (g, c) in params.components.iter().enumerate() {
            let off = self.component_offset(g);
            v.rows_mut(off, self.d * self.p).copy_from_slice(c.beta.as_slice());
            v.rows_mut(off + self.d * self.p, linalg::vech_len(self.p)).copy_from_slice(&linalg::vech(&c.sigma));
        }
        v
    }

    /// Inverse of [`flatten`](Self::flatten); the last weight is implied.
    pub fn unflatten(&self, v: &DVector<f64>) -> Result<MixtureParams> {
        let mut omega: Vec<f64> = (0..self.groups - 1).map(|g| v[g]).collect();
        omega.push(1.0 - omega.iter().sum::<f64>());
        let mut components = Vec::with_capacity(self.groups);
        for g in 0..self.groups {
            let off = self.component_offset(g);
            let beta = DMatrix::from_column_slice(self.d, self.p, v.rows(off, self.d * self.p).as_slice());
            let sigma = linalg::unvech(v.rows(off + self.d * self.p, linalg::vech_len(self.p)).as_slice(), self.p);
            components.push(crate::tobit::RegressionParams::new(beta, sigma)?);
        }
        MixtureParams::new(omega, components)
    }
}

/// Per-observation complete-data score `s_c(Psi; y_i)` with the conditional
/// expectations taken at the same parameters.
pub fn complete_score(
    params: &MixtureParams,
    data: &CensoredDataset,
    i: usize,
    resp: &Responsibilities,
    cache: &MomentCache,
) -> Result<DVector<f64>> {
    let index = ParamIndex::for_params(params);
    let precisions = precisions(params)?;
    Ok(score_row(params, &precisions, &index, data, i, resp, cache))
}

fn precisions(params: &MixtureParams) -> Result<Vec<DMatrix<f64>>> {
    params.components.iter().map(|c| Ok(CholFactor::new(&c.sigma)?.inverse())).collect()
}

fn score_row(
    params: &MixtureParams,
    precisions: &[DMatrix<f64>],
    index: &ParamIndex,
    data: &CensoredDataset,
    i: usize,
    resp: &Responsibilities,
    cache: &MomentCache,
) -> DVector<f64> {
    let (groups, d, p) = (index.groups, index.d, index.p);
    let mut s = DVector::zeros(index.len());
    let last = groups - 1;
    for g in 0..last {
        s[g] = resp.z[(i, g)] / params.omega[g] - resp.z[(i, last)] / params.omega[last];
    }
    let x: DVector<f64> = data.x.row(i).transpose();
    for (g, comp) in params.components.iter().enumerate() {
        let z = resp.z[(i, g)];
        let prec = &precisions[g];
        let mu = comp.beta.tr_mul(&x);
        let y_hat = cache.y_hat(i, g);
        let resid = y_hat - &mu;
        let score_beta = z * &x * (resid.transpose() * prec);
        let second = cache.yy_hat(i, g) - y_hat * mu.transpose() - &mu * y_hat.transpose() + &mu * mu.transpose();
        let mut score_sigma = 0.5 * z * (prec * second * prec - prec);
        linalg::symmetrize(&mut score_sigma);
        let off = index.component_offset(g);
        s.rows_mut(off, d * p).copy_from_slice(score_beta.as_slice());
        for (k, (a, b)) in linalg::vech_pairs(p).into_iter().enumerate() {
            let factor = if a == b { 1.0 } else { 2.0 };
            s[off + d * p + k] = factor * score_sigma[(a, b)];
        }
    }
    s
}

/// Scores of every observation (`N x nu`), expectations evaluated at `params`.
pub fn score_matrix(params: &MixtureParams, data: &CensoredDataset, qmc: &QmcConfig) -> Result<DMatrix<f64>> {
    let index = ParamIndex::for_params(params);
    let es = e_step(params, data, qmc)?;
    let precisions = precisions(params)?;
    let rows: Vec<DVector<f64>> = (0..data.n())
        .into_par_iter()
        .map(|i| score_row(params, &precisions, &index, data, i, &es.resp, &es.cache))
        .collect();
    Ok(DMatrix::from_fn(data.n(), index.len(), |i, k| rows[i][k]))
}

#[derive(Debug, Clone)]
pub struct Information {
    pub matrix: DMatrix<f64>,
    pub index: ParamIndex,
    pub n_obs: usize,
}

/// `sum_i s_i s_i'` at `params`; its inverse estimates `Cov(Psi_hat)`.
pub fn empirical_information(params: &MixtureParams, data: &CensoredDataset, qmc: &QmcConfig) -> Result<Information> {
    let scores = score_matrix(params, data, qmc)?;
    Ok(information_from_scores(&scores, ParamIndex::for_params(params)))
}

pub fn information_from_scores(scores: &DMatrix<f64>, index: ParamIndex) -> Information {
    let mut matrix = scores.tr_mul(scores);
    linalg::symmetrize(&mut matrix);
    Information { matrix, index, n_obs: scores.nrows() }
}

#[derive(Debug, Clone)]
pub struct Covariance {
    pub matrix: DMatrix<f64>,
    /// Information was numerically singular and was pseudo-inverted.
    pub pseudo_inverse: bool,
}

pub fn invert_information(info: &Information) -> Covariance {
    if let Some(chol) = info.matrix.clone().cholesky() {
        let inv = chol.inverse();
        if inv.iter().all(|v| v.is_finite()) {
            return Covariance { matrix: inv, pseudo_inverse: false };
        }
    }
    log::warn!("information matrix is singular; using a pseudo-inverse");
    let svd = info.matrix.clone().svd(true, true);
    let eps = svd.singular_values.max() * 1e-12 * info.matrix.nrows() as f64;
    let matrix = svd.pseudo_inverse(eps).unwrap_or_else(|_| DMatrix::from_element(info.matrix.nrows(), info.matrix.ncols(), f64::NAN));
    Covariance { matrix, pseudo_inverse: true }
}

/// Two-sided normal p-value.
pub fn two_sided_p(z: f64) -> f64 {
    libm::erfc(z.abs() / SQRT_2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaldEntry {
    pub component: usize,
    /// Row of `beta` (predictor, 0 is the intercept when present).
    pub predictor: usize,
    /// Column of `beta` (response).
    pub response: usize,
    pub estimate: f64,
    pub se: Option<f64>,
    pub z: Option<f64>,
    pub p: Option<f64>,
    pub sig_005: bool,
    pub sig_001: bool,
    pub sig_0001: bool,
    pub sig_bonferroni: bool,
}

impl WaldEntry {
    /// Conventional significance stars.
    pub fn stars(&self) -> &'static str {
        match (self.sig_0001, self.sig_001, self.sig_005) {
            (true, _, _) => "***",
            (_, true, _) => "**",
            (_, _, true) => "*",
            _ => "",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaldReport {
    pub entries: Vec<WaldEntry>,
    /// Number of slope tests the Bonferroni correction divides by.
    pub bonferroni_tests: usize,
    pub pseudo_inverse: bool,
}

impl WaldReport {
    pub fn entry(&self, component: usize, predictor: usize, response: usize) -> Option<&WaldEntry> {
        self.entries.iter().find(|e| e.component == component && e.predictor == predictor && e.response == response)
    }
}

/// Wald z-tests for every regression coefficient. Intercepts are reported
/// but not counted in the Bonferroni family.
pub fn wald_tests(params: &MixtureParams, info: &Information, intercept: bool) -> Result<WaldReport> {
    let index = info.index;
    if index != ParamIndex::for_params(params) {
        return Err(Error::Dimension("information does not match parameters".into()));
    }
    let cov = invert_information(info);
    let slopes = if intercept { index.d - 1 } else { index.d };
    let bonferroni_tests = (index.groups * slopes * index.p).max(1);
    let bonferroni_alpha = 0.05 / bonferroni_tests as f64;
    let mut entries = Vec::with_capacity(index.groups * index.d * index.p);
    for (g, comp) in params.components.iter().enumerate() {
        for j in 0..index.p {
            for r in 0..index.d {
                let k = index.beta(g, r, j);
                let estimate = comp.beta[(r, j)];
                let var = cov.matrix[(k, k)];
                let (se, z, p) = if var > 0.0 && var.is_finite() {
                    let se = var.sqrt();
                    let z = estimate / se;
                    (Some(se), Some(z), Some(two_sided_p(z)))
                } else {
                    (None, None, None)
                };
                let below = |a: f64| p.is_some_and(|p| p < a);
                entries.push(WaldEntry {
                    component: g,
                    predictor: r,
                    response: j,
                    estimate,
                    se,
                    z,
                    p,
                    sig_005: below(0.05),
                    sig_001: below(0.01),
                    sig_0001: below(0.001),
                    sig_bonferroni: below(bonferroni_alpha),
                });
            }
        }
    }
    Ok(WaldReport { entries, bonferroni_tests, pseudo_inverse: cov.pseudo_inverse })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stationarity {
    pub score_norm: f64,
    pub threshold: f64,
    pub stationary: bool,
}

/// First-order check: `||sum_i s_i|| <= 1e-4 sqrt(nu N) rms(s)`.
pub fn stationarity(scores: &DMatrix<f64>) -> Stationarity {
    let (n, nu) = scores.shape();
    let total: Vec<f64> = (0..nu)
        .map(|k| linalg::pairwise_sum(&scores.column(k).iter().copied().collect::<Vec<_>>()))
        .collect();
    let score_norm = total.iter().map(|v| v * v).sum::<f64>().sqrt();
    let rms = (scores.iter().map(|v| v * v).sum::<f64>() / (n * nu) as f64).sqrt();
    let threshold = 1e-4 * ((nu * n) as f64).sqrt() * rms;
    Stationarity { score_norm, threshold, stationary: score_norm <= threshold }
}
