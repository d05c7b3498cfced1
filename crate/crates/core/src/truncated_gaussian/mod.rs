//! Multivariate normal densities, rectangle probabilities, conditional
//! distributions and moments of doubly truncated Gaussians.

mod moments;
pub mod normal;
mod qmc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CholFactor};

pub use qmc::QmcConfig;

/// Truncated moments are computed by the CDF recursion up to this
/// dimension and by weighted QMC sampling above it.
pub const P_SWITCH: usize = 4;

/// Regions with smaller probability are rejected as degenerate.
pub const MASS_FLOOR: f64 = 1e-12;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianParams {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl GaussianParams {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        if covariance.nrows() != mean.len() || covariance.ncols() != mean.len() {
            return Err(Error::Dimension(format!(
                "mean has length {} but covariance is {}x{}",
                mean.len(),
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        if !linalg::is_symmetric(&covariance, 1e-12) {
            return Err(Error::InvalidInput("covariance is not symmetric".into()));
        }
        Ok(Self { mean, covariance })
    }

    pub fn standard(p: usize) -> Self {
        Self { mean: DVector::zeros(p), covariance: DMatrix::identity(p, p) }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Axis-aligned rectangle; infinite bounds mark untruncated sides.
#[derive(Debug, Clone, PartialEq)]
pub struct RectRegion {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl RectRegion {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension(format!(
                "{} lower bounds but {} upper bounds",
                lower.len(),
                upper.len()
            )));
        }
        for (j, (&l, &u)) in lower.iter().zip(&upper).enumerate() {
            if l.is_nan() || u.is_nan() {
                return Err(Error::InvalidRegion(format!("bound {j} is NaN")));
            }
            if l >= u {
                return Err(Error::InvalidRegion(format!("lower[{j}] = {l} is not below upper[{j}] = {u}")));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn whole(p: usize) -> Self {
        Self { lower: vec![f64::NEG_INFINITY; p], upper: vec![f64::INFINITY; p] }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(&v, (&l, &u))| l <= v && v <= u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfResult {
    pub probability: f64,
    /// Three standard errors across randomized QMC replicates; zero for
    /// the deterministic one- and two-dimensional paths.
    pub error_estimate: f64,
    pub points_used: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedMoments {
    /// `E[Y | Y in region]`
    pub m1: DVector<f64>,
    /// `E[Y Y' | Y in region]`
    pub m2: DMatrix<f64>,
    /// Probability of the region.
    pub mass: f64,
    pub error_estimate: f64,
}

impl TruncatedMoments {
    pub fn covariance(&self) -> DMatrix<f64> {
        &self.m2 - &self.m1 * self.m1.transpose()
    }
}

pub fn mvn_logpdf(params: &GaussianParams, point: &DVector<f64>) -> Result<f64> {
    if point.len() != params.dim() {
        return Err(Error::Dimension(format!("point has length {}, expected {}", point.len(), params.dim())));
    }
    let factor = CholFactor::new(&params.covariance)?;
    Ok(logpdf_with_factor(&factor, &(point - &params.mean)))
}

pub(crate) fn logpdf_with_factor(factor: &CholFactor, residual: &DVector<f64>) -> f64 {
    -0.5 * (residual.len() as f64 * LN_2PI + factor.log_det() + factor.quad_form(residual))
}

/// Zero-mean rectangle probability. Coordinates unbounded on both sides
/// are marginalized out before dispatching on the remaining dimension.
pub(crate) fn centered_cdf(cov: &DMatrix<f64>, lower: &[f64], upper: &[f64], qmc: &QmcConfig) -> Result<CdfResult> {
    let active: Vec<usize> = (0..lower.len()).filter(|&j| lower[j].is_finite() || upper[j].is_finite()).collect();
    let exact = |probability: f64| CdfResult { probability, error_estimate: 0.0, points_used: 0 };
    match active.as_slice() {
        [] => Ok(exact(1.0)),
        &[j] => {
            let s = cov[(j, j)].sqrt();
            Ok(exact(normal::interval(lower[j] / s, upper[j] / s)))
        }
        &[j, k] => {
            let (sj, sk) = (cov[(j, j)].sqrt(), cov[(k, k)].sqrt());
            let r = cov[(j, k)] / (sj * sk);
            Ok(exact(normal::bvn_rect(lower[j] / sj, upper[j] / sj, lower[k] / sk, upper[k] / sk, r)))
        }
        _ => {
            let sub = DMatrix::from_fn(active.len(), active.len(), |r, c| cov[(active[r], active[c])]);
            let lo: Vec<f64> = active.iter().map(|&j| lower[j]).collect();
            let hi: Vec<f64> = active.iter().map(|&j| upper[j]).collect();
            let problem = qmc::GenzProblem::new(&sub, &lo, &hi)?;
            let (probability, error_estimate, points_used) = qmc::rect_probability(&problem, qmc);
            Ok(CdfResult { probability, error_estimate, points_used })
        }
    }
}

fn check_region(params: &GaussianParams, region: &RectRegion) -> Result<()> {
    if region.dim() != params.dim() {
        return Err(Error::Dimension(format!("region has dimension {}, params {}", region.dim(), params.dim())));
    }
    if params.dim() == 0 {
        return Err(Error::Dimension("zero-dimensional Gaussian".into()));
    }
    RectRegion::new(region.lower.clone(), region.upper.clone()).map(|_| ())
}

/// Probability that `Y ~ N(mean, covariance)` falls in `region`.
pub fn mvn_cdf(params: &GaussianParams, region: &RectRegion, qmc: &QmcConfig) -> Result<CdfResult> {
    check_region(params, region)?;
    CholFactor::new(&params.covariance)?;
    let lower: Vec<f64> = region.lower.iter().zip(params.mean.iter()).map(|(l, m)| l - m).collect();
    let upper: Vec<f64> = region.upper.iter().zip(params.mean.iter()).map(|(u, m)| u - m).collect();
    centered_cdf(&params.covariance, &lower, &upper, qmc)
}

/// Precomputed split of a covariance into observed and censored blocks.
#[derive(Debug, Clone)]
pub(crate) struct ConditionalSplit {
    pub observed: Vec<usize>,
    pub censored: Vec<usize>,
    /// `Sigma_co Sigma_oo^{-1}`
    pub gain: DMatrix<f64>,
    pub cond_cov: DMatrix<f64>,
    /// Factor of `Sigma_oo` (absent when nothing is observed).
    pub observed_factor: Option<CholFactor>,
}

impl ConditionalSplit {
    pub fn new(cov: &DMatrix<f64>, observed: Vec<usize>) -> Result<Self> {
        let p = cov.nrows();
        let mut is_obs = vec![false; p];
        for &j in &observed {
            if j >= p || is_obs[j] {
                return Err(Error::InvalidInput(format!("invalid observed index {j}")));
            }
            is_obs[j] = true;
        }
        let censored: Vec<usize> = (0..p).filter(|&j| !is_obs[j]).collect();
        let pick = |rows: &[usize], cols: &[usize]| DMatrix::from_fn(rows.len(), cols.len(), |r, c| cov[(rows[r], cols[c])]);
        let s_cc = pick(&censored, &censored);
        if observed.is_empty() {
            return Ok(Self { gain: DMatrix::zeros(censored.len(), 0), cond_cov: s_cc, censored, observed, observed_factor: None });
        }
        let s_oo = pick(&observed, &observed);
        let factor = CholFactor::new(&s_oo).map_err(|_| Error::Singular("observed covariance block".into()))?;
        let s_oc = pick(&observed, &censored);
        let gain = factor.solve(&s_oc).transpose();
        let mut cond_cov = s_cc - &gain * s_oc;
        linalg::symmetrize(&mut cond_cov);
        Ok(Self { observed, censored, gain, cond_cov, observed_factor: Some(factor) })
    }

    pub fn cond_mean(&self, mean: &DVector<f64>, y_obs: &DVector<f64>) -> DVector<f64> {
        let mu_c = DVector::from_iterator(self.censored.len(), self.censored.iter().map(|&j| mean[j]));
        if self.observed.is_empty() {
            return mu_c;
        }
        let mu_o = DVector::from_iterator(self.observed.len(), self.observed.iter().map(|&j| mean[j]));
        mu_c + &self.gain * (y_obs - mu_o)
    }
}

/// Distribution of the unobserved coordinates given the observed ones.
pub fn conditional_params(params: &GaussianParams, observed_idx: &[usize], observed_values: &DVector<f64>) -> Result<GaussianParams> {
    if observed_idx.len() != observed_values.len() {
        return Err(Error::Dimension("observed indices and values differ in length".into()));
    }
    if observed_idx.is_empty() || observed_idx.len() >= params.dim() {
        return Err(Error::InvalidInput("observed set must be a proper nonempty subset".into()));
    }
    let split = ConditionalSplit::new(&params.covariance, observed_idx.to_vec())?;
    let mean = split.cond_mean(&params.mean, observed_values);
    Ok(GaussianParams { mean, covariance: split.cond_cov })
}

/// First and second moments of `Y ~ N(mean, covariance)` restricted to `region`.
pub fn truncated_moments(params: &GaussianParams, region: &RectRegion, qmc: &QmcConfig) -> Result<TruncatedMoments> {
    check_region(params, region)?;
    CholFactor::new(&params.covariance)?;
    moments::truncated_moments_unchecked(&params.mean, &params.covariance, &region.lower, &region.upper, qmc)
}

pub(crate) use moments::truncated_moments_unchecked;
