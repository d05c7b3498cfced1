//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use censgmr::dataset::{CensoredDataset, DetectionLimits};
use censgmr::mixture::{MixtureParams, MomentCache, Responsibilities};
use censgmr::rng;
use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};

pub fn std_normal_cdf(x: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().cdf(x)
}

/// Adaptive Simpson quadrature on a finite interval.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    rec(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 50)
}

/// Bivariate normal density written out by hand.
pub fn bvn_density(y: [f64; 2], mu: [f64; 2], s: [[f64; 2]; 2]) -> f64 {
    let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
    let (a, b) = (y[0] - mu[0], y[1] - mu[1]);
    let q = (s[1][1] * a * a - 2.0 * s[0][1] * a * b + s[0][0] * b * b) / det;
    (-0.5 * q).exp() / (2.0 * std::f64::consts::PI * det.sqrt())
}

/// Log-likelihood of a bivariate row with exactly one censored coordinate,
/// integrating the joint density over the censored half-line.
pub fn quadrature_row_loglik(mu: [f64; 2], s: [[f64; 2]; 2], y: [f64; 2], c: [i8; 2]) -> f64 {
    let k = c.iter().position(|&v| v != 0).expect("one censored coordinate");
    assert_eq!(c[1 - k], 0);
    let sd = s[k][k].sqrt();
    let (lo, hi) = if c[k] < 0 { (y[k] - 60.0 * sd - mu[k].abs(), y[k]) } else { (y[k], y[k] + 60.0 * sd + mu[k].abs()) };
    let f = |t: f64| {
        let mut point = y;
        point[k] = t;
        bvn_density(point, mu, s)
    };
    adaptive_simpson(&f, lo, hi, 1e-15).ln()
}

/// Bivariate clusters on one covariate with per-response limits.
pub fn regression_clusters(n: usize, seed: u64, limits: Vec<DetectionLimits>) -> (CensoredDataset, Vec<usize>) {
    let mut r = rng::stream(seed, &[]);
    let mut x = DMatrix::zeros(n, 2);
    let mut y = DMatrix::zeros(n, 2);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let x1: f64 = StandardNormal.sample(&mut r);
        let g = usize::from(i % 3 == 0);
        let (a, b) = if g == 1 { (4.0, -1.0) } else { (0.0, 1.0) };
        x[(i, 0)] = 1.0;
        x[(i, 1)] = x1;
        for j in 0..2 {
            let e: f64 = StandardNormal.sample(&mut r);
            y[(i, j)] = a + b * x1 + 0.7 * e + j as f64;
        }
        labels.push(g);
    }
    (CensoredDataset::from_latent(&y, x, limits, true).unwrap(), labels)
}

/// `Q_c(Psi; Psi_hat, y_i)`: expected complete-data log-likelihood of one row
/// with responsibilities and conditional moments frozen at `Psi_hat`.
pub fn expected_complete_loglik(
    params: &MixtureParams,
    data: &CensoredDataset,
    i: usize,
    resp: &Responsibilities,
    cache: &MomentCache,
) -> f64 {
    let p = data.p() as f64;
    let x: DVector<f64> = data.x.row(i).transpose();
    let mut q = 0.0;
    for (g, comp) in params.components.iter().enumerate() {
        let z = resp.z[(i, g)];
        let mu = comp.beta.transpose() * &x;
        let y = cache.y_hat(i, g);
        let yy = cache.yy_hat(i, g);
        let inv = comp.sigma.clone().try_inverse().unwrap();
        let m = yy - y * mu.transpose() - &mu * y.transpose() + &mu * mu.transpose();
        let trace = (&inv * m).trace();
        q += z * (params.omega[g].ln() - 0.5 * p * (2.0 * std::f64::consts::PI).ln() - 0.5 * comp.sigma.determinant().ln() - 0.5 * trace);
    }
    q
}

pub fn gauss(r: &mut impl rand::Rng) -> f64 {
    StandardNormal.sample(r)
}
