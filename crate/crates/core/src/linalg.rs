//! Small dense helpers on top of nalgebra: Cholesky with a one-shot ridge
//! repair, symmetric checks and half-vectorization.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Relative ridge added to the diagonal when a first factorization fails.
pub const RIDGE_SCALE: f64 = 1e-10;

/// Lower Cholesky factor of a covariance matrix.
#[derive(Debug, Clone)]
pub struct CholFactor {
    chol: Cholesky<f64, Dyn>,
    /// Set when the factorization only succeeded after adding a ridge.
    pub repaired: bool,
}

impl CholFactor {
    /// Factorizes `sigma`; on failure adds `1e-10 * trace / p` to the
    /// diagonal once and retries.
    pub fn new(sigma: &DMatrix<f64>) -> Result<Self> {
        if !sigma.is_square() {
            return Err(Error::Dimension(format!(
                "covariance is {}x{}",
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        if sigma.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotPositiveDefinite { after_repair: false });
        }
        if let Some(chol) = Cholesky::new(sigma.clone()) {
            return Ok(Self { chol, repaired: false });
        }
        let p = sigma.nrows();
        let ridge = RIDGE_SCALE * sigma.trace().abs().max(f64::MIN_POSITIVE) / p as f64;
        let mut repaired = sigma.clone();
        for j in 0..p {
            repaired[(j, j)] += ridge;
        }
        Cholesky::new(repaired)
            .map(|chol| Self { chol, repaired: true })
            .ok_or(Error::NotPositiveDefinite { after_repair: true })
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    pub fn l(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn log_det(&self) -> f64 {
        let l = self.chol.l_dirty();
        2.0 * (0..l.nrows()).map(|j| l[(j, j)].ln()).sum::<f64>()
    }

    /// `v' Sigma^{-1} v` via one triangular solve.
    pub fn quad_form(&self, v: &DVector<f64>) -> f64 {
        let l = self.chol.l_dirty();
        let n = l.nrows();
        let mut z = v.clone();
        for i in 0..n {
            let mut s = z[i];
            for k in 0..i {
                s -= l[(i, k)] * z[k];
            }
            z[i] = s / l[(i, i)];
        }
        z.norm_squared()
    }

    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// True when `m` is symmetric to `rel_tol` relative to its largest entry.
pub fn is_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let n = m.nrows();
    (0..n).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= rel_tol * scale))
}

/// Number of free entries of a symmetric `p x p` matrix.
pub fn vech_len(p: usize) -> usize {
    p * (p + 1) / 2
}

/// Column-major lower-triangle index pairs `(row, col)` with `row >= col`.
pub fn vech_pairs(p: usize) -> Vec<(usize, usize)> {
    (0..p).flat_map(|c| (c..p).map(move |r| (r, c))).collect()
}

pub fn vech(m: &DMatrix<f64>) -> Vec<f64> {
    vech_pairs(m.nrows()).into_iter().map(|(r, c)| m[(r, c)]).collect()
}

pub fn unvech(values: &[f64], p: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(p, p);
    for (&v, (r, c)) in values.iter().zip(vech_pairs(p)) {
        m[(r, c)] = v;
        m[(c, r)] = v;
    }
    m
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigenvalues().min()
}

/// Pairwise (cascade) summation; the result depends only on the order of
/// `values`, not on how they were produced.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        n if n <= 8 => values.iter().sum(),
        n => {
            let (a, b) = values.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}
