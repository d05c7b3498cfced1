//! Fixtures shared by the benchmarks.

use censgmr::simulation::{generate, ScenarioConfig};
use censgmr::{CensoredDataset, GaussianParams, RectRegion};
use nalgebra::{DMatrix, DVector};

/// Equicorrelated Gaussian with correlation `rho` and a box cutting every axis.
pub fn equicorrelated(p: usize, rho: f64) -> (GaussianParams, RectRegion) {
    let cov = DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { rho });
    let params = GaussianParams::new(DVector::from_element(p, 0.2), cov).expect("valid covariance");
    let lower = (0..p).map(|j| if j % 2 == 0 { -0.5 } else { f64::NEG_INFINITY }).collect();
    let upper = (0..p).map(|j| if j % 2 == 0 { f64::INFINITY } else { 1.0 }).collect();
    (params, RectRegion::new(lower, upper).expect("valid region"))
}

pub fn scenario_data(heavy: bool, n: usize) -> CensoredDataset {
    let base = if heavy { ScenarioConfig::scenario_ii() } else { ScenarioConfig::scenario_i() };
    generate(&ScenarioConfig { n, ..base }).expect("valid scenario").data
}
