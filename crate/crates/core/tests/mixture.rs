mod common;

use censgmr::dataset::{CensoredDataset, DetectionLimits};
use censgmr::mixture::{e_step, fit_mixture, m_step, mixture_loglik, run_em, FitConfig, MixtureParams};
use censgmr::simulation::{generate, ScenarioConfig};
use censgmr::tobit::{EmConfig, RegressionParams};
use censgmr::truncated_gaussian::QmcConfig;
use censgmr::rng;
use common::{bvn_density, gauss, quadrature_row_loglik};
use nalgebra::{dmatrix, DMatrix};

fn comp(beta: DMatrix<f64>, sigma: DMatrix<f64>) -> RegressionParams {
    RegressionParams::new(beta, sigma).unwrap()
}

fn sym2(m: &DMatrix<f64>) -> [[f64; 2]; 2] {
    [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
}

#[test]
fn small_dataset_loglik_matches_quadrature() {
    let limits = vec![DetectionLimits::new(0.0, f64::INFINITY).unwrap(), DetectionLimits::new(f64::NEG_INFINITY, 2.0).unwrap()];
    let y = dmatrix![-0.3, 1.0; 0.5, 2.4; 1.2, 0.1; -1.0, 0.3; 0.7, 3.0];
    let x = dmatrix![1.0, 0.2; 1.0, -0.5; 1.0, 1.1; 1.0, 0.0; 1.0, 2.0];
    let data = CensoredDataset::from_latent(&y, x.clone(), limits, true).unwrap();
    let params = MixtureParams::new(
        vec![0.35, 0.65],
        vec![
            comp(dmatrix![0.1, 1.5; 0.4, 0.2], dmatrix![0.8, 0.2; 0.2, 1.1]),
            comp(dmatrix![0.9, 0.5; -0.3, 0.6], dmatrix![1.3, -0.4; -0.4, 0.7]),
        ],
    )
    .unwrap();
    let mut want = 0.0;
    for i in 0..5 {
        let row = [data.y[(i, 0)], data.y[(i, 1)]];
        let c = [data.c[(i, 0)], data.c[(i, 1)]];
        let mut lik = 0.0;
        for (w, comp) in params.omega.iter().zip(&params.components) {
            let mu = comp.beta.tr_mul(&x.row(i).transpose());
            let s = sym2(&comp.sigma);
            let ll = if c == [0, 0] { bvn_density(row, [mu[0], mu[1]], s).ln() } else { quadrature_row_loglik([mu[0], mu[1]], s, row, c) };
            lik += w * ll.exp();
        }
        want += lik.ln();
    }
    assert!(data.c.iter().filter(|&&c| c != 0).count() >= 2);
    let got = mixture_loglik(&params, &data, &QmcConfig::default()).unwrap();
    assert!((got - want).abs() < 1e-9, "{got} vs {want}");
}

/// Textbook EM for an uncensored Gaussian mixture of bivariate regressions.
fn textbook_step(params: &MixtureParams, y: &DMatrix<f64>, x: &DMatrix<f64>) -> (MixtureParams, f64) {
    let (n, g) = (y.nrows(), params.groups());
    let mut z = DMatrix::zeros(n, g);
    let mut ll = 0.0;
    for i in 0..n {
        let dens: Vec<f64> = params
            .components
            .iter()
            .zip(&params.omega)
            .map(|(c, w)| {
                let mu = c.beta.tr_mul(&x.row(i).transpose());
                w * bvn_density([y[(i, 0)], y[(i, 1)]], [mu[0], mu[1]], sym2(&c.sigma))
            })
            .collect();
        let total: f64 = dens.iter().sum();
        ll += total.ln();
        for k in 0..g {
            z[(i, k)] = dens[k] / total;
        }
    }
    let mut omega = Vec::new();
    let mut comps = Vec::new();
    for k in 0..g {
        let w = DMatrix::from_diagonal(&z.column(k).into_owned());
        let beta = (x.transpose() * &w * x).try_inverse().unwrap() * x.transpose() * &w * y;
        let r = y - x * &beta;
        let sw = z.column(k).sum();
        let sigma = r.transpose() * &w * &r / sw;
        omega.push(sw / n as f64);
        comps.push(RegressionParams { beta, sigma: 0.5 * (&sigma + sigma.transpose()) });
    }
    (MixtureParams { omega, components: comps }, ll)
}

#[test]
fn uncensored_step_matches_textbook_em() {
    let (data, _) = common::regression_clusters(50, 3, vec![DetectionLimits::NONE; 2]);
    let start = MixtureParams::new(
        vec![0.4, 0.6],
        vec![
            comp(dmatrix![3.0, 4.0; -0.5, -0.5], dmatrix![1.0, 0.0; 0.0, 1.0]),
            comp(dmatrix![0.5, 1.0; 0.5, 0.5], dmatrix![1.0, 0.2; 0.2, 1.0]),
        ],
    )
    .unwrap();
    let (oracle, oracle_ll) = textbook_step(&start, &data.y, &data.x);
    let es = e_step(&start, &data, &QmcConfig::default()).unwrap();
    assert!((es.loglik - oracle_ll).abs() < 1e-10);
    let ours = m_step(&es.resp, &es.cache, &data).unwrap();
    for k in 0..2 {
        assert!((ours.omega[k] - oracle.omega[k]).abs() < 1e-12);
        assert!((&ours.components[k].beta - &oracle.components[k].beta).abs().max() < 1e-10);
        assert!((&ours.components[k].sigma - &oracle.components[k].sigma).abs().max() < 1e-10);
    }
}

#[test]
fn intercept_only_fit_matches_plain_gmm_oracle() {
    let mut r = rng::stream(17, &[]);
    let n = 400;
    let y = DMatrix::from_fn(n, 2, |i, j| {
        let shift = if i % 4 == 0 { 5.0 } else { 0.0 };
        shift + (j as f64) * 0.5 + gauss(&mut r)
    });
    let x = DMatrix::from_element(n, 1, 1.0);
    let data = CensoredDataset::uncensored(y.clone(), x.clone(), true).unwrap();
    let mut oracle = MixtureParams::new(
        vec![0.5, 0.5],
        vec![comp(dmatrix![4.0, 4.0], DMatrix::identity(2, 2)), comp(dmatrix![-1.0, -1.0], DMatrix::identity(2, 2))],
    )
    .unwrap();
    let mut previous = f64::NEG_INFINITY;
    let mut oracle_ll = 0.0;
    for _ in 0..10_000 {
        let (next, ll) = textbook_step(&oracle, &y, &x);
        oracle = next;
        oracle_ll = ll;
        if (ll - previous).abs() < 1e-13 * ll.abs() {
            break;
        }
        previous = ll;
    }
    let fit = fit_mixture(
        &data,
        &FitConfig { em: EmConfig { tol: 1e-12, max_iter: 5000, ..EmConfig::default() }, n_restarts: 4, ..FitConfig::with_groups(2) },
    )
    .unwrap();
    assert!((fit.loglik - oracle_ll).abs() < 1e-6, "{} vs {oracle_ll}", fit.loglik);
    let big = if oracle.omega[0] < oracle.omega[1] { 1 } else { 0 };
    assert!((fit.params.omega[1] - oracle.omega[big]).abs() < 1e-5);
}

#[test]
fn one_step_from_truth_does_not_decrease_loglik() {
    let sim = generate(&ScenarioConfig { seed: 9, ..ScenarioConfig::scenario_i() }).unwrap();
    let truth = ScenarioConfig::scenario_i().truth().unwrap();
    let em = EmConfig { max_iter: 3, ..EmConfig::default() };
    let (_, _, trace) = run_em(&sim.data, truth, &em).unwrap();
    for w in trace.loglik_per_iter.windows(2) {
        assert!(w[1] >= w[0] - 1e-9 * w[0].abs(), "{w:?}");
    }
}

#[test]
fn censored_fit_recovers_planted_clusters() {
    let limits = vec![DetectionLimits::new(0.0, f64::INFINITY).unwrap(), DetectionLimits::new(f64::NEG_INFINITY, 4.0).unwrap()];
    let (data, labels) = common::regression_clusters(600, 4, limits);
    let fit = fit_mixture(&data, &FitConfig { n_restarts: 6, ..FitConfig::with_groups(2) }).unwrap();
    assert!(fit.converged());
    assert_eq!(fit.diagnostics.monotonicity_violations, 0);
    let truth_first = labels.iter().map(|&l| 1 - l).collect::<Vec<_>>();
    let ari = censgmr::adjusted_rand_index(&fit.labels(), &truth_first).unwrap();
    assert!(ari > 0.9, "{ari}");
    assert!((fit.params.components[0].beta[(0, 0)] - 4.0).abs() < 0.3);
}
