//! Moments of truncated Gaussians by reduction to lower-dimensional
//! rectangle probabilities (Tallis; Manjunath and Wilhelm).

use nalgebra::{DMatrix, DVector};

use super::{centered_cdf, normal, qmc, QmcConfig, TruncatedMoments, MASS_FLOOR, P_SWITCH};
use crate::error::{Error, Result};
use crate::linalg;

struct Problem<'a> {
    cov: &'a DMatrix<f64>,
    lower: &'a [f64],
    upper: &'a [f64],
    qmc: &'a QmcConfig,
}

impl Problem<'_> {
    fn n(&self) -> usize {
        self.lower.len()
    }

    fn others(&self, skip: &[usize]) -> Vec<usize> {
        (0..self.n()).filter(|j| !skip.contains(j)).collect()
    }

    /// Marginal density of coordinate `k` at `x` times the conditional
    /// probability that the remaining coordinates fall in the region.
    fn f1(&self, k: usize, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Ok(0.0);
        }
        let skk = self.cov[(k, k)];
        let dens = normal::pdf(x / skk.sqrt()) / skk.sqrt();
        let rest = self.others(&[k]);
        if rest.is_empty() || dens == 0.0 {
            return Ok(dens);
        }
        let m = rest.len();
        let cond = DMatrix::from_fn(m, m, |r, c| {
            let (a, b) = (rest[r], rest[c]);
            self.cov[(a, b)] - self.cov[(a, k)] * self.cov[(k, b)] / skk
        });
        let shift: Vec<f64> = rest.iter().map(|&j| self.cov[(j, k)] / skk * x).collect();
        let lo: Vec<f64> = rest.iter().zip(&shift).map(|(&j, s)| self.lower[j] - s).collect();
        let hi: Vec<f64> = rest.iter().zip(&shift).map(|(&j, s)| self.upper[j] - s).collect();
        Ok(dens * centered_cdf(&cond, &lo, &hi, self.qmc)?.probability)
    }

    /// Bivariate analogue of `f1` for coordinates `k != q`.
    fn f2(&self, k: usize, q: usize, x: f64, y: f64) -> Result<f64> {
        if !x.is_finite() || !y.is_finite() {
            return Ok(0.0);
        }
        let (skk, skq, sqq) = (self.cov[(k, k)], self.cov[(k, q)], self.cov[(q, q)]);
        let dens = normal::bvn_pdf(x, y, skk, skq, sqq);
        let rest = self.others(&[k, q]);
        if rest.is_empty() || dens == 0.0 {
            return Ok(dens);
        }
        let det = skk * sqq - skq * skq;
        let (ikk, ikq, iqq) = (sqq / det, -skq / det, skk / det);
        let gain: Vec<(f64, f64)> = rest
            .iter()
            .map(|&j| {
                let (sjk, sjq) = (self.cov[(j, k)], self.cov[(j, q)]);
                (sjk * ikk + sjq * ikq, sjk * ikq + sjq * iqq)
            })
            .collect();
        let m = rest.len();
        let cond = DMatrix::from_fn(m, m, |r, c| {
            let b = rest[c];
            self.cov[(rest[r], b)] - gain[r].0 * self.cov[(k, b)] - gain[r].1 * self.cov[(q, b)]
        });
        let shift: Vec<f64> = gain.iter().map(|(gk, gq)| gk * x + gq * y).collect();
        let lo: Vec<f64> = rest.iter().zip(&shift).map(|(&j, s)| self.lower[j] - s).collect();
        let hi: Vec<f64> = rest.iter().zip(&shift).map(|(&j, s)| self.upper[j] - s).collect();
        Ok(dens * centered_cdf(&cond, &lo, &hi, self.qmc)?.probability)
    }

    fn moments(&self) -> Result<(f64, f64, DVector<f64>, DMatrix<f64>)> {
        let n = self.n();
        let cdf = centered_cdf(self.cov, self.lower, self.upper, self.qmc)?;
        let mass = cdf.probability;
        if !(mass >= MASS_FLOOR) {
            return Err(Error::DegenerateRegion { mass });
        }
        let fa: Vec<f64> = (0..n).map(|k| self.f1(k, self.lower[k])).collect::<Result<_>>()?;
        let fb: Vec<f64> = (0..n).map(|k| self.f1(k, self.upper[k])).collect::<Result<_>>()?;

        let mut m1 = DVector::zeros(n);
        for i in 0..n {
            m1[i] = (0..n).map(|k| self.cov[(i, k)] * (fa[k] - fb[k])).sum::<f64>() / mass;
        }

        // a_k F_k(a_k) with the convention inf * 0 = 0
        let edge = |bound: f64, f: f64| if bound.is_finite() { bound * f } else { 0.0 };
        let mut pair = DMatrix::zeros(n, n);
        for k in 0..n {
            for q in 0..n {
                if q == k {
                    continue;
                }
                let (ak, bk, aq, bq) = (self.lower[k], self.upper[k], self.lower[q], self.upper[q]);
                pair[(k, q)] = self.f2(k, q, ak, aq)? - self.f2(k, q, ak, bq)? - self.f2(k, q, bk, aq)? + self.f2(k, q, bk, bq)?;
            }
        }
        let mut m2 = self.cov.clone();
        for i in 0..n {
            for j in 0..=i {
                let mut acc = 0.0;
                for k in 0..n {
                    let skk = self.cov[(k, k)];
                    acc += self.cov[(i, k)] * self.cov[(j, k)] * (edge(self.lower[k], fa[k]) - edge(self.upper[k], fb[k])) / skk;
                    for q in 0..n {
                        if q != k {
                            let coef = self.cov[(j, q)] - self.cov[(k, q)] * self.cov[(j, k)] / skk;
                            acc += self.cov[(i, k)] * coef * pair[(k, q)];
                        }
                    }
                }
                m2[(i, j)] += acc / mass;
                m2[(j, i)] = m2[(i, j)];
            }
        }
        Ok((mass, cdf.error_estimate, m1, m2))
    }
}

/// Moments for an already validated problem; `lower`/`upper` are absolute
/// bounds around `mean`.
pub(crate) fn truncated_moments_unchecked(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    lower: &[f64],
    upper: &[f64],
    qmc_cfg: &QmcConfig,
) -> Result<TruncatedMoments> {
    let n = mean.len();
    if lower.iter().chain(upper).all(|b| b.is_infinite()) {
        return Ok(TruncatedMoments {
            m1: mean.clone(),
            m2: cov + mean * mean.transpose(),
            mass: 1.0,
            error_estimate: 0.0,
        });
    }
    let lo: Vec<f64> = lower.iter().zip(mean.iter()).map(|(l, m)| l - m).collect();
    let hi: Vec<f64> = upper.iter().zip(mean.iter()).map(|(u, m)| u - m).collect();
    let (mass, error_estimate, e1, e2) = if n <= P_SWITCH {
        Problem { cov, lower: &lo, upper: &hi, qmc: qmc_cfg }.moments()?
    } else {
        let problem = qmc::GenzProblem::new(cov, &lo, &hi)?;
        let (mass, err, e1, e2) = qmc::sampled_moments(&problem, qmc_cfg);
        if !(mass >= MASS_FLOOR) {
            return Err(Error::DegenerateRegion { mass });
        }
        (mass, err, e1, e2)
    };
    let mut m1 = mean + &e1;
    for j in 0..n {
        m1[j] = m1[j].clamp(lower[j], upper[j]);
    }
    let cross = mean * e1.transpose();
    let mut m2 = e2 + &cross + cross.transpose() + mean * mean.transpose();
    linalg::symmetrize(&mut m2);
    Ok(TruncatedMoments { m1, m2, mass, error_estimate })
}
