//! Synthetic scenarios, competing estimators and evaluation metrics.

mod metrics;
mod study;

pub use metrics::{adjusted_rand_index, align_components, frobenius_errors, ParamErrors};
pub use study::{
    median_ari_replicate, point_correctness_csv, run_comparison, type1_study, Comparison, EvalMetrics, MeanSd, Method,
    MethodSummary, ReplicateResult, Type1Row, Type1Table,
};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use crate::dataset::apply_censoring;
use crate::dataset::{CensoredDataset, DetectionLimits};
use crate::error::{Error, Result};
use crate::linalg::CholFactor;
use crate::mixture::MixtureParams;
use crate::rng;
use crate::tobit::RegressionParams;

/// A limit pair as stored in JSON; `null` means unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitSpec {
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl LimitSpec {
    pub fn to_limits(self) -> Result<DetectionLimits> {
        DetectionLimits::new(self.lower.unwrap_or(f64::NEG_INFINITY), self.upper.unwrap_or(f64::INFINITY))
    }
}

/// Data-generating mixture. `beta[g]` is `d x p` with the intercept in row 0;
/// predictors are mean-zero Gaussian with covariance `predictor_cov`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub omega: Vec<f64>,
    pub beta: Vec<Vec<Vec<f64>>>,
    pub sigma: Vec<Vec<Vec<f64>>>,
    pub predictor_cov: Vec<Vec<f64>>,
    pub limits: Vec<LimitSpec>,
    pub n: usize,
    pub seed: u64,
}

fn matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension("ragged or empty matrix".into()));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

const STAND_IN_PREDICTOR_COV: [[f64; 3]; 3] = [[1.0, 0.2, 0.1], [0.2, 1.0, 0.15], [0.1, 0.15, 1.0]];

impl ScenarioConfig {
    fn three_group(limits: [LimitSpec; 2]) -> Self {
        let rows = |m: &[[f64; 2]]| m.iter().map(|r| r.to_vec()).collect::<Vec<_>>();
        Self {
            omega: vec![0.1, 0.7, 0.2],
            beta: vec![
                rows(&[[2.0, 20.0], [0.0, -2.0], [0.0, 0.0], [0.0, 0.0]]),
                rows(&[[3.0, 25.0], [1.0, -3.0], [0.0, 0.0], [0.0, 0.0]]),
                rows(&[[3.5, 30.0], [2.0, -5.0], [0.0, 0.0], [0.0, 0.0]]),
            ],
            sigma: vec![
                rows(&[[1.0, 0.1], [0.1, 1.0]]),
                rows(&[[2.0, 0.2], [0.2, 0.5]]),
                rows(&[[0.5, 0.3], [0.3, 2.0]]),
            ],
            predictor_cov: STAND_IN_PREDICTOR_COV.iter().map(|r| r.to_vec()).collect(),
            limits: limits.to_vec(),
            n: 1000,
            seed: 1,
        }
    }

    /// Mild censoring: `Y1` left-censored at 0, `Y2` right-censored at 30.
    pub fn scenario_i() -> Self {
        Self::three_group([LimitSpec { lower: Some(0.0), upper: None }, LimitSpec { lower: None, upper: Some(30.0) }])
    }

    /// Heavy censoring: `Y1` left-censored at 2.5, `Y2` right-censored at 26.5.
    pub fn scenario_ii() -> Self {
        Self::three_group([LimitSpec { lower: Some(2.5), upper: None }, LimitSpec { lower: None, upper: Some(26.5) }])
    }

    /// Same mixture without any detection limits.
    pub fn without_censoring(mut self) -> Self {
        self.limits.iter_mut().for_each(|l| *l = LimitSpec { lower: None, upper: None });
        self
    }

    pub fn groups(&self) -> usize {
        self.omega.len()
    }

    pub fn truth(&self) -> Result<MixtureParams> {
        let components = self
            .beta
            .iter()
            .zip(&self.sigma)
            .map(|(b, s)| RegressionParams::new(matrix(b)?, matrix(s)?))
            .collect::<Result<Vec<_>>>()?;
        MixtureParams::new(self.omega.clone(), components)
    }

    pub fn detection_limits(&self) -> Result<Vec<DetectionLimits>> {
        self.limits.iter().map(|l| l.to_limits()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let truth = self.truth()?;
        let (d, p) = truth.components[0].beta.shape();
        if self.limits.len() != p {
            return Err(Error::Dimension(format!("{} limits for {p} responses", self.limits.len())));
        }
        self.detection_limits()?;
        let cov = matrix(&self.predictor_cov)?;
        if cov.shape() != (d - 1, d - 1) {
            return Err(Error::Dimension(format!("predictor covariance must be {0}x{0}", d - 1)));
        }
        CholFactor::new(&cov)?;
        if self.n == 0 {
            return Err(Error::InvalidInput("sample size must be positive".into()));
        }
        Ok(())
    }
}

/// One simulated dataset with its hidden truth.
#[derive(Debug, Clone)]
pub struct Simulated {
    pub data: CensoredDataset,
    /// 0-based component of each row.
    pub labels: Vec<usize>,
    pub latent: DMatrix<f64>,
}

/// Draws labels, predictors (intercept prepended), latent responses, then censors.
pub fn generate(sc: &ScenarioConfig) -> Result<Simulated> {
    sc.validate()?;
    let truth = sc.truth()?;
    let (d, p) = truth.components[0].beta.shape();
    let pred_chol = CholFactor::new(&matrix(&sc.predictor_cov)?)?.l();
    let noise: Vec<DMatrix<f64>> = truth.components.iter().map(|c| Ok(CholFactor::new(&c.sigma)?.l())).collect::<Result<_>>()?;
    let mut r = rng::stream(sc.seed, &[]);
    let mut labels = Vec::with_capacity(sc.n);
    let mut x = DMatrix::zeros(sc.n, d);
    let mut latent = DMatrix::zeros(sc.n, p);
    let normals = |r: &mut rand_chacha::ChaCha8Rng, k: usize| DVector::from_fn(k, |_, _| StandardNormal.sample(r));
    for i in 0..sc.n {
        let u: f64 = r.random();
        let mut acc = 0.0;
        let mut g = truth.groups() - 1;
        for (k, w) in truth.omega.iter().enumerate() {
            acc += w;
            if u < acc {
                g = k;
                break;
            }
        }
        labels.push(g);
        x[(i, 0)] = 1.0;
        let z = &pred_chol * normals(&mut r, d - 1);
        for k in 1..d {
            x[(i, k)] = z[k - 1];
        }
        let mean = truth.components[g].beta.tr_mul(&x.row(i).transpose());
        let y = mean + &noise[g] * normals(&mut r, p);
        latent.set_row(i, &y.transpose());
    }
    let data = CensoredDataset::from_latent(&latent, x, sc.detection_limits()?, true)?;
    Ok(Simulated { data, labels, latent })
}
