//! Censored responses, censoring directions, detection limits and design.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Known detection limits of one response; infinite values mean "no limit".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionLimits {
    pub lower: f64,
    pub upper: f64,
}

impl DetectionLimits {
    pub const NONE: Self = Self { lower: f64::NEG_INFINITY, upper: f64::INFINITY };

    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() || lower >= upper {
            return Err(Error::InvalidInput(format!("detection limits ({lower}, {upper}) are not ordered")));
        }
        Ok(Self { lower, upper })
    }

    /// Clips a latent value; returns the recorded value and its censoring direction.
    pub fn censor(&self, value: f64) -> (f64, i8) {
        if value <= self.lower {
            (self.lower, -1)
        } else if value >= self.upper {
            (self.upper, 1)
        } else {
            (value, 0)
        }
    }
}

/// Entrywise clipping of latent responses to the detection limits.
///
/// Values exactly at a limit are treated as censored there.
pub fn apply_censoring(y_star: &DMatrix<f64>, limits: &[DetectionLimits]) -> (DMatrix<f64>, DMatrix<i8>) {
    let (n, p) = y_star.shape();
    let mut y = y_star.clone();
    let mut c = DMatrix::zeros(n, p);
    for j in 0..p {
        for i in 0..n {
            let (v, dir) = limits[j].censor(y_star[(i, j)]);
            y[(i, j)] = v;
            c[(i, j)] = dir;
        }
    }
    (y, c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CensoredDataset {
    /// N x p responses; censored entries hold their limit.
    pub y: DMatrix<f64>,
    /// N x p censoring directions in {-1, 0, +1}.
    pub c: DMatrix<i8>,
    /// N x d design matrix.
    pub x: DMatrix<f64>,
    pub limits: Vec<DetectionLimits>,
    /// Whether the first design column is an intercept.
    pub intercept: bool,
    patterns: Vec<u32>,
}

impl CensoredDataset {
    pub fn new(
        y: DMatrix<f64>,
        c: DMatrix<i8>,
        x: DMatrix<f64>,
        limits: Vec<DetectionLimits>,
        intercept: bool,
    ) -> Result<Self> {
        let (n, p) = y.shape();
        if p == 0 || p > 30 {
            return Err(Error::Dimension(format!("{p} responses")));
        }
        if c.shape() != (n, p) || x.nrows() != n || limits.len() != p {
            return Err(Error::Dimension(format!(
                "Y is {n}x{p}, C is {}x{}, X has {} rows, {} limits",
                c.nrows(),
                c.ncols(),
                x.nrows(),
                limits.len()
            )));
        }
        if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite value in Y or X".into()));
        }
        for i in 0..n {
            for j in 0..p {
                let (v, lim) = (y[(i, j)], limits[j]);
                let ok = match c[(i, j)] {
                    -1 => v == lim.lower,
                    1 => v == lim.upper,
                    0 => lim.lower < v && v < lim.upper,
                    _ => false,
                };
                if !ok {
                    return Err(Error::InvalidInput(format!(
                        "row {i}, response {j}: value {v} inconsistent with censoring code {}",
                        c[(i, j)]
                    )));
                }
            }
        }
        if intercept && (x.ncols() == 0 || x.column(0).iter().any(|&v| v != 1.0)) {
            return Err(Error::InvalidInput("first design column is not an intercept".into()));
        }
        let patterns = (0..n)
            .map(|i| (0..p).filter(|&j| c[(i, j)] == 0).fold(0u32, |m, j| m | (1 << j)))
            .collect();
        let data = Self { y, c, x, limits, intercept, patterns };
        if !data.full_column_rank() {
            log::warn!("design matrix does not have full column rank");
        }
        Ok(data)
    }

    /// Derives censoring codes from latent (or already clipped) values.
    pub fn from_latent(y_star: &DMatrix<f64>, x: DMatrix<f64>, limits: Vec<DetectionLimits>, intercept: bool) -> Result<Self> {
        if limits.len() != y_star.ncols() {
            return Err(Error::Dimension(format!("{} limits for {} responses", limits.len(), y_star.ncols())));
        }
        let (y, c) = apply_censoring(y_star, &limits);
        Self::new(y, c, x, limits, intercept)
    }

    pub fn uncensored(y: DMatrix<f64>, x: DMatrix<f64>, intercept: bool) -> Result<Self> {
        let (n, p) = y.shape();
        Self::new(y, DMatrix::zeros(n, p), x, vec![DetectionLimits::NONE; p], intercept)
    }

    pub fn n(&self) -> usize {
        self.y.nrows()
    }

    pub fn p(&self) -> usize {
        self.y.ncols()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    /// Bit mask of the observed (uncensored) responses of row `i`.
    pub fn observed_mask(&self, i: usize) -> u32 {
        self.patterns[i]
    }

    pub fn distinct_masks(&self) -> Vec<u32> {
        let mut m = self.patterns.clone();
        m.sort_unstable();
        m.dedup();
        m
    }

    pub fn is_censored(&self, i: usize) -> bool {
        self.patterns[i] != (1u32 << self.p()) - 1
    }

    /// `(left, right)` censoring counts per response.
    pub fn censor_counts(&self) -> Vec<(usize, usize)> {
        (0..self.p())
            .map(|j| {
                let col = self.c.column(j);
                (col.iter().filter(|&&v| v == -1).count(), col.iter().filter(|&&v| v == 1).count())
            })
            .collect()
    }

    pub fn full_column_rank(&self) -> bool {
        let xtx = self.x.transpose() * &self.x;
        xtx.nrows() > 0 && nalgebra::Cholesky::new(xtx).is_some()
    }

    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let pick_f = |m: &DMatrix<f64>| DMatrix::from_fn(rows.len(), m.ncols(), |r, c| m[(rows[r], c)]);
        let c = DMatrix::from_fn(rows.len(), self.p(), |r, k| self.c[(rows[r], k)]);
        Self::new(pick_f(&self.y), c, pick_f(&self.x), self.limits.clone(), self.intercept)
    }

    /// Rows without any censored response.
    pub fn drop_censored(&self) -> Result<Self> {
        let keep: Vec<usize> = (0..self.n()).filter(|&i| !self.is_censored(i)).collect();
        self.subset(&keep)
    }

    /// Same values with the censoring ignored (limits removed).
    pub fn ignore_censoring(&self) -> Result<Self> {
        Self::uncensored(self.y.clone(), self.x.clone(), self.intercept)
    }

    /// Same responses with an intercept-only design.
    pub fn intercept_only(&self) -> Result<Self> {
        Self::new(self.y.clone(), self.c.clone(), DMatrix::from_element(self.n(), 1, 1.0), self.limits.clone(), true)
    }

    /// Concatenates `other` below `self`.
    pub fn stack(&self, other: &Self) -> Result<Self> {
        let n = self.n() + other.n();
        let cat_f = |a: &DMatrix<f64>, b: &DMatrix<f64>| {
            DMatrix::from_fn(n, a.ncols(), |r, c| if r < a.nrows() { a[(r, c)] } else { b[(r - a.nrows(), c)] })
        };
        let c = DMatrix::from_fn(n, self.p(), |r, k| if r < self.n() { self.c[(r, k)] } else { other.c[(r - self.n(), k)] });
        Self::new(cat_f(&self.y, &other.y), c, cat_f(&self.x, &other.x), self.limits.clone(), self.intercept)
    }
}
