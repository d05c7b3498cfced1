//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `CENSGMR_ACCEPTANCE_ONLY=3,5` restricts the run to the listed criteria.
//! Failures are reported but only change the exit status when
//! `CENSGMR_ACCEPTANCE_STRICT=1` is set.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use censgmr::dataset::{CensoredDataset, DetectionLimits};
use censgmr::inference::{complete_score, score_matrix, stationarity, ParamIndex};
use censgmr::mixture::{e_step, fit_mixture, FitConfig, MixtureParams, MomentCache, Responsibilities};
use censgmr::selection::{select_g, EntropyKind};
use censgmr::simulation::{generate, run_comparison, type1_study, LimitSpec, Method, ScenarioConfig};
use censgmr::tobit::{fit_tobit, EmConfig, RegressionParams};
use censgmr::{align_components, rng, truncated_moments, GaussianParams, QmcConfig, RectRegion};
use censgmr_cli::report::FitReport;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

type Check = fn() -> (bool, String);

fn gauss(r: &mut impl Rng) -> f64 {
    StandardNormal.sample(r)
}

fn main() {
    let only: Option<Vec<usize>> = std::env::var("CENSGMR_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let criteria: [(usize, &str, Check); 10] = [
        (1, "truncated moments vs Monte Carlo", moments_vs_monte_carlo),
        (2, "tobit reduces to least squares", tobit_reduction),
        (3, "EM monotonicity", em_monotonicity),
        (4, "scenario I recovery", scenario_i_recovery),
        (5, "scenario II method contrast", scenario_ii_contrast),
        (6, "censoring fractions", censoring_fractions),
        (7, "type-1 calibration", type1_calibration),
        (8, "ICL model selection", icl_selection),
        (9, "score validity", score_validity),
        (10, "CLI end-to-end recovery", cli_end_to_end),
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (id, name, check) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = check();
        ran += 1;
        if !pass {
            failed += 1;
        }
        println!(
            "[{}] criterion {id} ({name}): {detail} [{:.1} s]",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    let strict = std::env::var("CENSGMR_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if failed > 0 && strict {
        std::process::exit(1);
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

// ---------------------------------------------------------------- 1

struct McMoments {
    m1: DVector<f64>,
    m2: DMatrix<f64>,
    se1: DVector<f64>,
    se2: DMatrix<f64>,
}

fn rejection_moments(params: &GaussianParams, lower: &[f64], upper: &[f64], draws: usize, seed: u64) -> McMoments {
    let p = params.dim();
    let l = params.covariance.clone().cholesky().unwrap().l();
    let mut r = rng::stream(seed, &[]);
    let mut s1 = DVector::<f64>::zeros(p);
    let mut s2 = DMatrix::<f64>::zeros(p, p);
    let mut s1sq = DVector::<f64>::zeros(p);
    let mut s2sq = DMatrix::<f64>::zeros(p, p);
    let mut kept = 0usize;
    let mut z = DVector::<f64>::zeros(p);
    for _ in 0..draws {
        for k in 0..p {
            z[k] = gauss(&mut r);
        }
        let x = &params.mean + &l * &z;
        if (0..p).all(|k| lower[k] <= x[k] && x[k] <= upper[k]) {
            kept += 1;
            for a in 0..p {
                s1[a] += x[a];
                s1sq[a] += x[a] * x[a];
                for b in 0..p {
                    let v = x[a] * x[b];
                    s2[(a, b)] += v;
                    s2sq[(a, b)] += v * v;
                }
            }
        }
    }
    let n = kept as f64;
    let m1 = &s1 / n;
    let m2 = &s2 / n;
    let se1 = DVector::<f64>::from_fn(p, |a, _| ((s1sq[a] / n - m1[a] * m1[a]) / n).sqrt());
    let se2 = DMatrix::<f64>::from_fn(p, p, |a, b| ((s2sq[(a, b)] / n - m2[(a, b)] * m2[(a, b)]) / n).sqrt());
    McMoments { m1, m2, se1, se2 }
}

fn univariate_closed_form(mu: f64, var: f64, lo: f64, hi: f64) -> (f64, f64) {
    let n01 = Normal::standard();
    let (cdf, pdf) = (|x: f64| n01.cdf(x), |x: f64| n01.pdf(x));
    let s = var.sqrt();
    let (a, b) = ((lo - mu) / s, (hi - mu) / s);
    let z = cdf(b) - cdf(a);
    let (pa, pb) = (pdf(a), pdf(b));
    let ta = if a.is_finite() { a * pa } else { 0.0 };
    let tb = if b.is_finite() { b * pb } else { 0.0 };
    let m = mu + s * (pa - pb) / z;
    let v = var * (1.0 + (ta - tb) / z - ((pa - pb) / z).powi(2));
    (m, v + m * m)
}

fn moments_vs_monte_carlo() -> (bool, String) {
    let mut r = rng::stream(2024, &[]);
    let qmc = QmcConfig::default();
    let mut worst_z: f64 = 0.0;
    let mut failures = 0;
    let mut uni_err: f64 = 0.0;
    let mut cases = 0;
    while cases < 50 {
        let p = 1 + cases % 3;
        let a = DMatrix::from_fn(p, p, |_, _| gauss(&mut r));
        let cov = &a * a.transpose() + DMatrix::identity(p, p) * 0.3;
        let mean = DVector::from_fn(p, |_, _| gauss(&mut r));
        let mut lower = vec![f64::NEG_INFINITY; p];
        let mut upper = vec![f64::INFINITY; p];
        for k in 0..p {
            let sd = cov[(k, k)].sqrt();
            match r.random_range(0..3) {
                0 => lower[k] = mean[k] + sd * r.random_range(-1.5..0.8),
                1 => upper[k] = mean[k] + sd * r.random_range(-0.8..1.5),
                _ => {
                    let lo = mean[k] + sd * r.random_range(-1.5..0.5);
                    lower[k] = lo;
                    upper[k] = lo + sd * r.random_range(0.5..2.5);
                }
            }
        }
        let params = GaussianParams::new(mean.clone(), cov.clone()).unwrap();
        let region = RectRegion::new(lower.clone(), upper.clone()).unwrap();
        let m = truncated_moments(&params, &region, &qmc).unwrap();
        if m.mass < 0.05 {
            continue;
        }
        let mc = rejection_moments(&params, &lower, &upper, 10_000_000, 7000 + cases as u64);
        for a in 0..p {
            let z = (m.m1[a] - mc.m1[a]).abs() / mc.se1[a];
            worst_z = worst_z.max(z);
            failures += usize::from(z > 4.0);
            for b in 0..p {
                let z = (m.m2[(a, b)] - mc.m2[(a, b)]).abs() / mc.se2[(a, b)];
                worst_z = worst_z.max(z);
                failures += usize::from(z > 4.0);
            }
        }
        if p == 1 {
            let (m1, m2) = univariate_closed_form(mean[0], cov[(0, 0)], lower[0], upper[0]);
            uni_err = uni_err.max((m.m1[0] - m1).abs()).max((m.m2[(0, 0)] - m2).abs());
        }
        cases += 1;
    }
    (
        failures == 0 && uni_err <= 1e-8,
        format!("50 cases, {failures} entries beyond 4 SE (worst {worst_z:.2} SE); univariate max error {uni_err:.1e}"),
    )
}

// ---------------------------------------------------------------- 2

fn tobit_reduction() -> (bool, String) {
    let mut r = rng::stream(2, &[]);
    let n = 500;
    let x = DMatrix::from_fn(n, 3, |_, j| if j == 0 { 1.0 } else { gauss(&mut r) });
    let y = DMatrix::from_fn(n, 2, |i, j| 1.0 + x[(i, 1)] * (j as f64 + 0.5) - 0.7 * x[(i, 2)] + gauss(&mut r));
    let data = CensoredDataset::uncensored(y.clone(), x.clone(), true).unwrap();
    let (fit, trace) = fit_tobit(&data, &EmConfig::default()).unwrap();
    let beta = (x.transpose() * &x).try_inverse().unwrap() * x.transpose() * &y;
    let resid = &y - &x * &beta;
    let sigma = resid.transpose() * &resid / n as f64;
    let err = (&fit.beta - beta).abs().max().max((&fit.sigma - sigma).abs().max());
    (err <= 1e-8 && trace.iterations == 1, format!("max deviation from OLS/ML {err:.1e} after {} iteration(s)", trace.iterations))
}

// ---------------------------------------------------------------- 3

fn em_monotonicity() -> (bool, String) {
    let mut worst = 0.0f64;
    let mut violations = 0;
    for rep in 0..20u64 {
        let sim = generate(&ScenarioConfig { seed: 300 + rep, ..ScenarioConfig::scenario_i() }).unwrap();
        let fit = fit_mixture(&sim.data, &FitConfig { n_restarts: 1, seed: rep, ..FitConfig::with_groups(3) }).unwrap();
        let ll = fit.trace.loglik_per_iter.clone();
        for w in ll.windows(2) {
            let drop = (w[0] - w[1]) / w[0].abs();
            worst = worst.max(drop);
            violations += usize::from(w[0] - w[1] > 1e-6 * w[0].abs());
        }
    }
    (violations == 0, format!("20 fits, {violations} iterations decreased by more than 1e-6|l| (largest relative drop {worst:.1e})"))
}

// ---------------------------------------------------------------- 4, 5, 6

fn desk_config() -> FitConfig {
    FitConfig { n_restarts: 16, ..FitConfig::default() }
}

fn scenario_i_recovery() -> (bool, String) {
    let cmp = run_comparison(&ScenarioConfig::scenario_i(), 25, &[Method::CensGmr], &desk_config()).unwrap();
    let s = cmp.summary(Method::CensGmr).unwrap();
    let omega: Vec<f64> = s.omega.iter().map(|m| m.mean).collect();
    let beta: Vec<f64> = s.beta_errors.iter().map(|m| m.mean).collect();
    let ari = s.ari.map_or(f64::NAN, |a| a.mean);
    let omega_ok = omega.iter().zip([0.1, 0.7, 0.2]).all(|(w, t)| (w - t).abs() <= 0.02);
    let beta_ok = beta.iter().zip([0.44, 0.19, 0.53]).all(|(b, t)| *b <= 2.0 * t);
    (
        s.n_failed == 0 && omega_ok && ari >= 0.85 && beta_ok,
        format!(
            "{} reps; omega ({:.3}, {:.3}, {:.3}); ARI {ari:.3}; beta errors ({:.3}, {:.3}, {:.3})",
            s.n_ok, omega[0], omega[1], omega[2], beta[0], beta[1], beta[2]
        ),
    )
}

fn scenario_ii_contrast() -> (bool, String) {
    let methods = [Method::CensGmr, Method::IgnoreGmr, Method::CensGmm];
    let cmp = run_comparison(&ScenarioConfig::scenario_ii(), 25, &methods, &desk_config()).unwrap();
    let ari = |m: Method| cmp.summary(m).and_then(|s| s.ari).map_or(f64::NAN, |a| a.mean);
    let (cens, ignore, gmm) = (ari(Method::CensGmr), ari(Method::IgnoreGmr), ari(Method::CensGmm));
    let rep_ari = |rep: usize, m: Method| cmp.replicate(rep, m).and_then(|r| r.metrics.as_ref()).and_then(|m| m.ari);
    let ordered = (0..25)
        .filter(|&rep| match (rep_ari(rep, Method::CensGmr), rep_ari(rep, Method::IgnoreGmr), rep_ari(rep, Method::CensGmm)) {
            (Some(c), Some(i), Some(g)) => c > i && c > g,
            _ => false,
        })
        .count();
    (
        (0.60..=0.76).contains(&cens) && ignore <= 0.25 && gmm <= 0.35 && ordered >= 24,
        format!("ARI cens-gmr {cens:.3}, ignore-gmr {ignore:.3}, cens-gmm {gmm:.3}; ordering held in {ordered}/25"),
    )
}

fn censoring_fractions() -> (bool, String) {
    let fractions = |sc: ScenarioConfig| {
        let (mut left, mut right) = (Vec::new(), Vec::new());
        for rep in 0..25u64 {
            let sim = generate(&ScenarioConfig { seed: rng::derive_seed(sc.seed, &[rep]), ..sc.clone() }).unwrap();
            let counts = sim.data.censor_counts();
            left.push(counts[0].0 as f64 / sim.data.n() as f64);
            right.push(counts[1].1 as f64 / sim.data.n() as f64);
        }
        (100.0 * mean(&left), 100.0 * mean(&right))
    };
    let (a1, b1) = fractions(ScenarioConfig::scenario_i());
    let (a2, b2) = fractions(ScenarioConfig::scenario_ii());
    let ok = (a1 - 4.1).abs() <= 1.5 && (b1 - 13.7).abs() <= 1.5 && (a2 - 40.2).abs() <= 2.0 && (b2 - 37.2).abs() <= 2.0;
    (ok, format!("scenario I {a1:.2}% / {b1:.2}%; scenario II {a2:.2}% / {b2:.2}% (mean of 25 datasets, N=1000)"))
}

// ---------------------------------------------------------------- 7

fn type1_calibration() -> (bool, String) {
    let full = type1_study(&ScenarioConfig::scenario_i(), 200, &desk_config(), 0.05).unwrap();
    let rates: Vec<f64> = full.zero_rows().map(|r| r.rate).collect();
    let (lo, hi) = (rates.iter().copied().fold(1.0, f64::min), rates.iter().copied().fold(0.0, f64::max));
    let full_ok = full.n_failed == 0 && rates.len() == 13 && rates.iter().all(|r| (0.02..=0.09).contains(r));
    let smoke = type1_study(&ScenarioConfig { seed: 99, ..ScenarioConfig::scenario_i() }, 50, &desk_config(), 0.05).unwrap();
    let smoke_rates: Vec<f64> = smoke.zero_rows().map(|r| r.rate).collect();
    let smoke_hi = smoke_rates.iter().copied().fold(0.0, f64::max);
    let smoke_ok = smoke.n_failed == 0 && smoke_rates.iter().all(|r| (0.0..=0.14).contains(r));
    let listing: Vec<String> = rates.iter().map(|r| format!("{r:.3}")).collect();
    (
        full_ok && smoke_ok,
        format!(
            "200 reps: 13 null rates in [{lo:.3}, {hi:.3}] ({}), band [0.02, 0.09] {}; 50-rep smoke max {smoke_hi:.3}, band [0, 0.14] {}",
            listing.join(" "),
            if full_ok { "met" } else { "missed" },
            if smoke_ok { "met" } else { "missed" }
        ),
    )
}

// ---------------------------------------------------------------- 8

fn icl_selection() -> (bool, String) {
    let config = FitConfig { n_restarts: 8, ..FitConfig::default() };
    let mut chosen = Vec::new();
    for rep in 0..10u64 {
        let sim = generate(&ScenarioConfig { seed: 800 + rep, ..ScenarioConfig::scenario_i() }).unwrap();
        let sel = select_g(&sim.data, &[1, 2, 3, 4, 5], &FitConfig { seed: rep, ..config }, EntropyKind::Posterior).unwrap();
        chosen.push(sel.table.chosen());
    }
    let hits = chosen.iter().filter(|&&g| g == 3).count();
    (hits >= 8, format!("G=3 chosen in {hits}/10 (choices {chosen:?})"))
}

// ---------------------------------------------------------------- 9

fn expected_complete_loglik(params: &MixtureParams, data: &CensoredDataset, i: usize, resp: &Responsibilities, cache: &MomentCache) -> f64 {
    let x: DVector<f64> = data.x.row(i).transpose();
    let p = data.p() as f64;
    params
        .components
        .iter()
        .enumerate()
        .map(|(g, c)| {
            let mu = c.beta.transpose() * &x;
            let (y, yy) = (cache.y_hat(i, g), cache.yy_hat(i, g));
            let m = yy - y * mu.transpose() - &mu * y.transpose() + &mu * mu.transpose();
            let inv = c.sigma.clone().try_inverse().unwrap();
            resp.z[(i, g)]
                * (params.omega[g].ln() - 0.5 * p * (2.0 * std::f64::consts::PI).ln() - 0.5 * c.sigma.determinant().ln() - 0.5 * (inv * m).trace())
        })
        .sum()
}

fn small_instance(seed: u64) -> (MixtureParams, CensoredDataset) {
    let mut r = rng::stream(seed, &[]);
    let comps: Vec<RegressionParams> = (0..2)
        .map(|g| {
            let beta = DMatrix::from_fn(2, 2, |k, _| if k == 0 { 4.0 * g as f64 } else { 0.0 } + gauss(&mut r));
            let a = DMatrix::from_fn(2, 2, |_, _| 0.7 * gauss(&mut r));
            RegressionParams::new(beta, &a * a.transpose() + DMatrix::identity(2, 2) * 0.3).unwrap()
        })
        .collect();
    let w = r.random_range(0.3..0.7);
    let params = MixtureParams::new(vec![w, 1.0 - w], comps).unwrap();
    let x = DMatrix::from_fn(20, 2, |_, j| if j == 0 { 1.0 } else { gauss(&mut r) });
    let mut y = DMatrix::zeros(20, 2);
    for i in 0..20 {
        let c = &params.components[usize::from(i % 2 == 1)];
        let v = c.beta.tr_mul(&x.row(i).transpose()) + c.sigma.clone().cholesky().unwrap().l() * DVector::from_fn(2, |_, _| gauss(&mut r));
        y.set_row(i, &v.transpose());
    }
    let mut sorted: Vec<f64> = y.column(0).iter().copied().collect();
    sorted.sort_by(f64::total_cmp);
    let limits = vec![DetectionLimits::new(sorted[3], f64::INFINITY).unwrap(), DetectionLimits::new(f64::NEG_INFINITY, y.column(1).max() - 0.3).unwrap()];
    (params, CensoredDataset::from_latent(&y, x, limits, true).unwrap())
}

fn score_validity() -> (bool, String) {
    let qmc = QmcConfig::default();
    let mut fd_failures = 0;
    let mut worst_rel: f64 = 0.0;
    let mut checked = 0;
    for inst in 0..10u64 {
        let (params, data) = small_instance(900 + inst);
        let es = e_step(&params, &data, &qmc).unwrap();
        let index = ParamIndex::for_params(&params);
        let theta = index.flatten(&params);
        for i in 0..data.n() {
            let s = complete_score(&params, &data, i, &es.resp, &es.cache).unwrap();
            for k in 0..index.len() {
                let h = 1e-5 * theta[k].abs().max(1.0);
                let (mut up, mut dn) = (theta.clone(), theta.clone());
                up[k] += h;
                dn[k] -= h;
                let fd = (expected_complete_loglik(&index.unflatten(&up).unwrap(), &data, i, &es.resp, &es.cache)
                    - expected_complete_loglik(&index.unflatten(&dn).unwrap(), &data, i, &es.resp, &es.cache))
                    / (2.0 * h);
                let diff = (s[k] - fd).abs();
                let scale = s[k].abs().max(fd.abs());
                if diff > 1e-8 {
                    worst_rel = worst_rel.max(diff / scale);
                }
                fd_failures += usize::from(diff > 1e-4 * scale && diff > 1e-8);
                checked += 1;
            }
        }
    }
    let em = EmConfig { tol: 1e-12, max_iter: 50_000, ..EmConfig::default() };
    let mut converged = 0;
    let mut nonstationary = 0;
    let mut worst_ratio: f64 = 0.0;
    let mut fits: Vec<(CensoredDataset, usize)> = (0..10u64).map(|inst| (small_instance(900 + inst).1, 2)).collect();
    for rep in 0..3u64 {
        fits.push((generate(&ScenarioConfig { seed: 950 + rep, ..ScenarioConfig::scenario_i() }).unwrap().data, 3));
    }
    for (k, (data, groups)) in fits.iter().enumerate() {
        let Ok(fit) = fit_mixture(data, &FitConfig { em, n_restarts: 4, seed: k as u64, ..FitConfig::with_groups(*groups) }) else {
            continue;
        };
        if !fit.converged() {
            continue;
        }
        converged += 1;
        let st = stationarity(&score_matrix(&fit.params, data, &qmc).unwrap());
        worst_ratio = worst_ratio.max(st.score_norm / st.threshold);
        nonstationary += usize::from(!st.stationary);
    }
    (
        fd_failures == 0 && nonstationary == 0 && converged > 0,
        format!(
            "{checked} score entries, {fd_failures} beyond 1e-4 relative (worst {worst_rel:.1e}); {converged}/13 converged fits, {nonstationary} above the stationarity threshold (worst ratio {worst_ratio:.2})"
        ),
    )
}

// ---------------------------------------------------------------- 10

fn planted_scenario() -> ScenarioConfig {
    let m = |rows: &[[f64; 3]]| rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>();
    let cov = |sd: [f64; 3], rho: f64| {
        (0..3).map(|a| (0..3).map(|b| if a == b { sd[a] * sd[a] } else { rho * sd[a] * sd[b] }).collect()).collect()
    };
    ScenarioConfig {
        omega: vec![0.3, 0.5, 0.2],
        beta: vec![
            m(&[[500.0, 300.0, 30.0], [120.0, 80.0, 8.0], [0.0, -60.0, 4.0]]),
            m(&[[1000.0, 700.0, 65.0], [-90.0, 100.0, 0.0], [70.0, 0.0, -7.0]]),
            m(&[[1450.0, 1050.0, 100.0], [150.0, 0.0, 8.0], [0.0, 90.0, 0.0]]),
        ],
        sigma: vec![cov([150.0, 100.0, 10.0], 0.3), cov([200.0, 150.0, 15.0], 0.2), cov([150.0, 120.0, 10.0], 0.4)],
        predictor_cov: vec![vec![1.0, 0.2], vec![0.2, 1.0]],
        limits: vec![
            LimitSpec { lower: Some(200.0), upper: Some(1700.0) },
            LimitSpec { lower: Some(80.0), upper: Some(1300.0) },
            LimitSpec { lower: Some(8.0), upper: Some(120.0) },
        ],
        n: 2000,
        seed: 1010,
    }
}

fn write_fixture(dir: &Path, sc: &ScenarioConfig) {
    let sim = generate(sc).unwrap();
    let mut csv = String::from("marker_a,marker_b,marker_c,x1,x2\n");
    for i in 0..sim.data.n() {
        let y = sim.data.y.row(i);
        let x = sim.data.x.row(i);
        csv.push_str(&format!("{},{},{},{},{}\n", y[0], y[1], y[2], x[1], x[2]));
    }
    std::fs::write(dir.join("data.csv"), csv).unwrap();
    let limits = r#"[{"name":"marker_a","lower":200,"upper":1700},{"name":"marker_b","lower":80,"upper":1300},{"name":"marker_c","lower":8,"upper":120}]"#;
    std::fs::write(dir.join("limits.json"), limits).unwrap();
}

fn cli_end_to_end() -> (bool, String) {
    let dir = tempfile::tempdir().unwrap();
    let sc = planted_scenario();
    write_fixture(dir.path(), &sc);
    let out = dir.path().join("fit");
    let status = Command::new(env!("CARGO_BIN_EXE_censgmr"))
        .args(["fit", "--data"])
        .arg(dir.path().join("data.csv"))
        .arg("--limits")
        .arg(dir.path().join("limits.json"))
        .args(["--responses", "marker_a,marker_b,marker_c", "--predictors", "x1,x2", "--groups", "3", "--restarts", "16", "--seed", "7", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    if !status.status.success() {
        return (false, format!("fit exited with {:?}: {}", status.status.code(), String::from_utf8_lossy(&status.stderr)));
    }
    let report = FitReport::load(&out.join("report.json")).unwrap();
    let names = ["(intercept)", "x1", "x2"];
    let responses = ["marker_a", "marker_b", "marker_c"];
    let est = MixtureParams::new(
        report.omega.clone(),
        (0..3)
            .map(|g| {
                let beta = DMatrix::from_fn(3, 3, |r, j| report.coefficient(g, names[r], responses[j]).unwrap().estimate);
                let sigma = DMatrix::from_fn(3, 3, |a, b| report.components[g].sigma[a][b]);
                RegressionParams::new(beta, sigma).unwrap()
            })
            .collect(),
    )
    .unwrap();
    let truth = sc.truth().unwrap();
    let perm = align_components(&truth, &est).unwrap();
    let mut outside = Vec::new();
    let mut worst: f64 = 0.0;
    for (t, &e) in perm.iter().enumerate() {
        for r in 0..3 {
            for j in 0..3 {
                let c = report.coefficient(e, names[r], responses[j]).unwrap();
                let Some(se) = c.se else {
                    outside.push(format!("g{} {} {}: no SE", t + 1, names[r], responses[j]));
                    continue;
                };
                let z = (c.estimate - truth.components[t].beta[(r, j)]) / se;
                worst = worst.max(z.abs());
                if z.abs() > 3.0 {
                    outside.push(format!("g{} {} {} ({z:.2} SE)", t + 1, names[r], responses[j]));
                }
            }
        }
    }
    let counts: Vec<String> = report.censoring.iter().map(|c| format!("{}:{}/{}", c.response, c.left, c.right)).collect();
    (
        outside.is_empty() && report.model.converged,
        format!(
            "27 coefficients, largest deviation {worst:.2} SE{}; censored (left/right) {}",
            if outside.is_empty() { String::new() } else { format!("; outside 3 SE: {}", outside.join(", ")) },
            counts.join(" ")
        ),
    )
}
