//! Randomized quasi-Monte Carlo integration over rectangles using Genz's
//! separation-of-variables transform.
//!
//! Points follow a Richtmyer rule `frac(j * sqrt(prime_k) + shift_k)` with a
//! baker's (tent) periodization. Each random shift gives one independent
//! unbiased replicate; the spread across shifts provides the error estimate.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::normal;
use crate::error::Result;
use crate::linalg::CholFactor;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QmcConfig {
    pub points_per_shift: usize,
    pub shifts: usize,
    pub seed: u64,
}

impl Default for QmcConfig {
    fn default() -> Self {
        Self { points_per_shift: 1 << 12, shifts: 8, seed: 0 }
    }
}

impl QmcConfig {
    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

fn first_primes(n: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(n);
    let mut candidate = 2u64;
    while primes.len() < n {
        if primes.iter().take_while(|&&p| p * p <= candidate).all(|&p| candidate % p != 0) {
            primes.push(candidate);
        }
        candidate += 1;
    }
    primes
}

struct RichtmyerRule {
    alphas: Vec<f64>,
}

impl RichtmyerRule {
    fn new(dim: usize) -> Self {
        Self { alphas: first_primes(dim).into_iter().map(|p| (p as f64).sqrt().fract()).collect() }
    }

    /// Writes point `j` of the shifted, tent-transformed rule into `out`.
    fn point(&self, j: usize, shift: &[f64], out: &mut [f64]) {
        for ((o, &a), &s) in out.iter_mut().zip(&self.alphas).zip(shift) {
            let u = (j as f64 * a + s).fract();
            *o = (2.0 * u - 1.0).abs();
        }
    }
}

/// A centered Gaussian problem with variables reordered so that the
/// tightest marginal interval is integrated first.
pub(crate) struct GenzProblem {
    order: Vec<usize>,
    l: DMatrix<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl GenzProblem {
    pub(crate) fn new(cov: &DMatrix<f64>, lower: &[f64], upper: &[f64]) -> Result<Self> {
        let n = lower.len();
        let mut order: Vec<usize> = (0..n).collect();
        let key = |j: usize| {
            let s = cov[(j, j)].sqrt();
            (normal::interval(lower[j] / s, upper[j] / s), cov[(j, j)], lower[j], upper[j])
        };
        order.sort_by(|&x, &y| {
            let (kx, ky) = (key(x), key(y));
            kx.0.total_cmp(&ky.0)
                .then(kx.1.total_cmp(&ky.1))
                .then(kx.2.total_cmp(&ky.2))
                .then(kx.3.total_cmp(&ky.3))
        });
        let permuted = DMatrix::from_fn(n, n, |r, c| cov[(order[r], order[c])]);
        let l = CholFactor::new(&permuted)?.l();
        Ok(Self {
            lower: order.iter().map(|&j| lower[j]).collect(),
            upper: order.iter().map(|&j| upper[j]).collect(),
            order,
            l,
        })
    }

    fn dim(&self) -> usize {
        self.order.len()
    }

    /// Evaluates the transformed integrand at `w`; fills `y` with the
    /// sampled standardized coordinates when `w` has full dimension.
    fn integrand(&self, w: &[f64], y: &mut [f64]) -> f64 {
        let n = self.dim();
        let mut f = 1.0;
        for i in 0..n {
            let s: f64 = (0..i).map(|k| self.l[(i, k)] * y[k]).sum();
            let lii = self.l[(i, i)];
            let a = (self.lower[i] - s) / lii;
            let b = (self.upper[i] - s) / lii;
            let width = normal::interval(a, b);
            f *= width;
            if !(f > 0.0) {
                return 0.0;
            }
            if i < w.len() {
                // upper-tail intervals are sampled by reflection to keep precision
                let v = if a > 0.0 {
                    -normal::inv_cdf(normal::cdf(-a) - w[i] * width)
                } else {
                    normal::inv_cdf(normal::cdf(a) + w[i] * width)
                };
                y[i] = v.clamp(a, b);
            }
        }
        f
    }

    /// Maps standardized coordinates back to the caller's variable order.
    fn unpermute(&self, y: &[f64]) -> DVector<f64> {
        let n = self.dim();
        let mut x = DVector::zeros(n);
        for i in 0..n {
            let v: f64 = (0..=i).map(|k| self.l[(i, k)] * y[k]).sum();
            x[self.order[i]] = v;
        }
        x
    }
}

fn shift_vector(seed: u64, shift: usize, dim: usize) -> Vec<f64> {
    let mut r = rng::stream(seed, &[shift as u64]);
    (0..dim).map(|_| r.random::<f64>()).collect()
}

fn mean_and_error(estimates: &[f64]) -> (f64, f64) {
    let m = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / m;
    if estimates.len() < 2 {
        return (mean, 0.0);
    }
    let var = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, 3.0 * (var / m).sqrt())
}

/// Rectangle probability; returns `(estimate, 3-sigma error, points)`.
pub(crate) fn rect_probability(problem: &GenzProblem, qmc: &QmcConfig) -> (f64, f64, usize) {
    let n = problem.dim();
    let rule = RichtmyerRule::new(n.saturating_sub(1).max(1));
    let mut w = vec![0.0; n.saturating_sub(1)];
    let mut y = vec![0.0; n];
    let shifts = qmc.shifts.max(1);
    let points = qmc.points_per_shift.max(1);
    let estimates: Vec<f64> = (0..shifts)
        .map(|s| {
            let shift = shift_vector(qmc.seed, s, w.len());
            let mut acc = 0.0;
            for j in 1..=points {
                rule.point(j, &shift, &mut w);
                acc += problem.integrand(&w, &mut y);
            }
            acc / points as f64
        })
        .collect();
    let (mean, err) = mean_and_error(&estimates);
    (mean.clamp(0.0, 1.0), err, shifts * points)
}

/// Self-normalized importance estimates of the first two moments of the
/// centered truncated Gaussian. Returns `(mass, mass_error, m1, m2)`.
pub(crate) fn sampled_moments(
    problem: &GenzProblem,
    qmc: &QmcConfig,
) -> (f64, f64, DVector<f64>, DMatrix<f64>) {
    let n = problem.dim();
    let rule = RichtmyerRule::new(n);
    let mut w = vec![0.0; n];
    let mut y = vec![0.0; n];
    let shifts = qmc.shifts.max(1);
    let points = qmc.points_per_shift.max(1);
    let mut masses = Vec::with_capacity(shifts);
    let mut m1 = DVector::zeros(n);
    let mut m2 = DMatrix::zeros(n, n);
    let mut used = 0usize;
    for s in 0..shifts {
        let shift = shift_vector(qmc.seed, s, n);
        let mut wsum = 0.0;
        let mut s1 = DVector::zeros(n);
        let mut s2 = DMatrix::zeros(n, n);
        for j in 1..=points {
            rule.point(j, &shift, &mut w);
            let f = problem.integrand(&w, &mut y);
            if f > 0.0 {
                let x = problem.unpermute(&y);
                s2 += f * &x * x.transpose();
                s1 += f * x;
                wsum += f;
            }
        }
        masses.push(wsum / points as f64);
        if wsum > 0.0 {
            m1 += s1 / wsum;
            m2 += s2 / wsum;
            used += 1;
        }
    }
    let (mass, err) = mean_and_error(&masses);
    if used > 0 {
        m1 /= used as f64;
        m2 /= used as f64;
    }
    (mass, err, m1, m2)
}
