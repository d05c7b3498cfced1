use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::MixtureParams;

fn choose2(k: usize) -> f64 {
    (k as f64) * (k as f64 - 1.0) / 2.0
}

/// Adjusted Rand index from the contingency table. Two single-cluster
/// labelings score 1.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("label vectors of length {} and {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::InvalidInput("need at least two labels".into()));
    }
    let mut table: HashMap<(usize, usize), usize> = HashMap::new();
    let mut rows: HashMap<usize, usize> = HashMap::new();
    let mut cols: HashMap<usize, usize> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&k| choose2(k)).sum();
    let sum_a: f64 = rows.values().map(|&k| choose2(k)).sum();
    let sum_b: f64 = cols.values().map(|&k| choose2(k)).sum();
    let expected = sum_a * sum_b / choose2(a.len());
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for sub in permutations(n - 1) {
        for pos in 0..n {
            let mut p = sub.clone();
            p.insert(pos, n - 1);
            out.push(p);
        }
    }
    out
}

/// Frobenius distance over the leading rows shared by both coefficient
/// matrices; rows present only in `truth` are compared with zero.
fn beta_distance(truth: &nalgebra::DMatrix<f64>, est: &nalgebra::DMatrix<f64>) -> f64 {
    let mut acc = 0.0;
    for r in 0..truth.nrows() {
        for j in 0..truth.ncols() {
            let e = if r < est.nrows() { est[(r, j)] } else { 0.0 };
            acc += (truth[(r, j)] - e).powi(2);
        }
    }
    acc.sqrt()
}

fn shared_rows_distance(truth: &nalgebra::DMatrix<f64>, est: &nalgebra::DMatrix<f64>) -> f64 {
    let rows = truth.nrows().min(est.nrows());
    (truth.rows(0, rows) - est.rows(0, rows)).norm()
}

/// Permutation `perm` with `perm[g]` the estimated component matched to
/// true component `g`, minimizing the summed coefficient distance over
/// the rows both models share (exhaustive, `G <= 8`).
pub fn align_components(truth: &MixtureParams, est: &MixtureParams) -> Result<Vec<usize>> {
    let g = truth.groups();
    if est.groups() != g {
        return Err(Error::Dimension(format!("{} true vs {} estimated components", g, est.groups())));
    }
    if g > 8 {
        return Err(Error::InvalidInput("exhaustive alignment supports at most 8 components".into()));
    }
    let cost: Vec<Vec<f64>> = (0..g)
        .map(|t| (0..g).map(|e| shared_rows_distance(&truth.components[t].beta, &est.components[e].beta)).collect())
        .collect();
    let best = permutations(g)
        .into_iter()
        .map(|perm| {
            let c: f64 = perm.iter().enumerate().map(|(t, &e)| cost[t][e]).sum();
            (perm, c)
        })
        .fold(None::<(Vec<usize>, f64)>, |acc, (perm, c)| match acc {
            Some((_, best)) if best <= c => acc,
            _ => Some((perm, c)),
        });
    Ok(best.map(|(p, _)| p).unwrap_or_default())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamErrors {
    pub beta: Vec<f64>,
    pub sigma: Vec<f64>,
    pub omega: Vec<f64>,
    /// `||Psi - Psi_hat||_F` over all weights, coefficients and covariances.
    pub total: f64,
}

/// Per-component errors after applying `perm` (from [`align_components`]).
/// Coefficient rows the estimate lacks are compared against zero.
pub fn frobenius_errors(truth: &MixtureParams, est: &MixtureParams, perm: &[usize]) -> ParamErrors {
    let mut beta = Vec::new();
    let mut sigma = Vec::new();
    let mut omega = Vec::new();
    let mut total = 0.0;
    for (t, &e) in perm.iter().enumerate() {
        let (tc, ec) = (&truth.components[t], &est.components[e]);
        let b = beta_distance(&tc.beta, &ec.beta);
        let s = (&tc.sigma - &ec.sigma).norm();
        let w = (truth.omega[t] - est.omega[e]).abs();
        total += b * b + s * s + w * w;
        beta.push(b);
        sigma.push(s);
        omega.push(w);
    }
    ParamErrors { beta, sigma, omega, total: total.sqrt() }
}
