use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{adjusted_rand_index, align_components, frobenius_errors, ParamErrors};
use super::{generate, ScenarioConfig};
use crate::dataset::CensoredDataset;
use crate::error::{Error, Result};
use crate::inference::{empirical_information, wald_tests};
use crate::mixture::{fit_mixture, FitConfig};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Censored mixture of regressions.
    CensGmr,
    /// Mixture of regressions treating recorded limits as exact values.
    IgnoreGmr,
    /// Mixture of regressions on rows without any censored entry.
    DeleteGmr,
    /// Censored mixture with an intercept-only design.
    CensGmm,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::CensGmr, Method::IgnoreGmr, Method::DeleteGmr, Method::CensGmm];

    pub fn name(self) -> &'static str {
        match self {
            Method::CensGmr => "cens-gmr",
            Method::IgnoreGmr => "ignore-gmr",
            Method::DeleteGmr => "delete-gmr",
            Method::CensGmm => "cens-gmm",
        }
    }

    fn prepare(self, data: &CensoredDataset) -> Result<CensoredDataset> {
        match self {
            Method::CensGmr => Ok(data.clone()),
            Method::IgnoreGmr => data.ignore_censoring(),
            Method::DeleteGmr => data.drop_censored(),
            Method::CensGmm => data.intercept_only(),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown method '{s}' (expected cens-gmr, ignore-gmr, delete-gmr, cens-gmm)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    /// Absent for methods that cannot classify every row.
    pub ari: Option<f64>,
    pub errors: ParamErrors,
    /// Estimated weights in the order of the true components.
    pub omega_hat: Vec<f64>,
    /// `permutation[g]` is the estimated component matched to true component `g`.
    pub permutation: Vec<usize>,
    pub censored_fraction: Vec<f64>,
    pub n_used: usize,
    pub converged: bool,
    /// Predicted labels mapped to true component indices.
    #[serde(skip)]
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub replicate: usize,
    /// Seed that regenerates this replicate's data.
    pub seed: u64,
    pub method: Method,
    pub metrics: Option<EvalMetrics>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    /// Absent with fewer than two values.
    pub sd: Option<f64>,
    pub n: usize,
}

impl MeanSd {
    pub fn of(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = (n > 1).then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt());
        Some(Self { mean, sd, n })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub n_ok: usize,
    pub n_failed: usize,
    pub ari: Option<MeanSd>,
    pub omega: Vec<MeanSd>,
    pub beta_errors: Vec<MeanSd>,
    pub sigma_errors: Vec<MeanSd>,
    pub total_error: Option<MeanSd>,
    pub n_used: Option<MeanSd>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub replicates: Vec<ReplicateResult>,
    pub summaries: Vec<MethodSummary>,
}

fn replicate_seed(master: u64, rep: usize) -> u64 {
    rng::derive_seed(master, &[rep as u64])
}

fn fit_seed(master: u64, rep: usize) -> u64 {
    rng::derive_seed(master, &[rep as u64, 1])
}

fn censored_fraction(data: &CensoredDataset) -> Vec<f64> {
    data.censor_counts().iter().map(|(lo, hi)| (lo + hi) as f64 / data.n() as f64).collect()
}

fn evaluate(
    sc: &ScenarioConfig,
    truth_labels: &[usize],
    data: &CensoredDataset,
    method: Method,
    config: &FitConfig,
) -> Result<EvalMetrics> {
    let truth = sc.truth()?;
    let used = method.prepare(data)?;
    let fit = fit_mixture(&used, config)?;
    let perm = align_components(&truth, &fit.params)?;
    let mut inverse = vec![0; perm.len()];
    for (t, &e) in perm.iter().enumerate() {
        inverse[e] = t;
    }
    let labels: Vec<usize> = fit.labels().into_iter().map(|e| inverse[e]).collect();
    let ari = match method {
        Method::DeleteGmr => None,
        _ => Some(adjusted_rand_index(truth_labels, &labels)?),
    };
    Ok(EvalMetrics {
        ari,
        errors: frobenius_errors(&truth, &fit.params, &perm),
        omega_hat: perm.iter().map(|&e| fit.params.omega[e]).collect(),
        permutation: perm,
        censored_fraction: censored_fraction(data),
        n_used: used.n(),
        converged: fit.converged(),
        labels,
    })
}

fn summarize(method: Method, results: &[&ReplicateResult], groups: usize) -> MethodSummary {
    let ok: Vec<&EvalMetrics> = results.iter().filter_map(|r| r.metrics.as_ref()).collect();
    let collect = |f: &dyn Fn(&EvalMetrics) -> f64| MeanSd::of(&ok.iter().map(|m| f(m)).collect::<Vec<_>>());
    let per_group = |f: &dyn Fn(&EvalMetrics, usize) -> f64| (0..groups).filter_map(|g| collect(&|m| f(m, g))).collect();
    let aris: Vec<f64> = ok.iter().filter_map(|m| m.ari).collect();
    MethodSummary {
        method,
        n_ok: ok.len(),
        n_failed: results.len() - ok.len(),
        ari: MeanSd::of(&aris),
        omega: per_group(&|m, g| m.omega_hat[g]),
        beta_errors: per_group(&|m, g| m.errors.beta[g]),
        sigma_errors: per_group(&|m, g| m.errors.sigma[g]),
        total_error: collect(&|m| m.errors.total),
        n_used: collect(&|m| m.n_used as f64),
    }
}

/// Generates `n_replicates` datasets, fits every method to each and scores
/// the aligned estimates against the truth.
pub fn run_comparison(sc: &ScenarioConfig, n_replicates: usize, methods: &[Method], config: &FitConfig) -> Result<Comparison> {
    sc.validate()?;
    if n_replicates == 0 || methods.is_empty() {
        return Err(Error::InvalidInput("need at least one replicate and one method".into()));
    }
    let groups = sc.groups();
    let per_rep: Vec<Vec<ReplicateResult>> = (0..n_replicates)
        .into_par_iter()
        .map(|rep| {
            let seed = replicate_seed(sc.seed, rep);
            let rep_sc = ScenarioConfig { seed, ..sc.clone() };
            let cfg = FitConfig { groups, seed: fit_seed(sc.seed, rep), ..*config };
            let sim = generate(&rep_sc);
            methods
                .iter()
                .map(|&method| {
                    let outcome = sim.as_ref().map_err(Clone::clone).and_then(|s| evaluate(&rep_sc, &s.labels, &s.data, method, &cfg));
                    match outcome {
                        Ok(m) => ReplicateResult { replicate: rep, seed, method, metrics: Some(m), error: None },
                        Err(e) => ReplicateResult { replicate: rep, seed, method, metrics: None, error: Some(e.to_string()) },
                    }
                })
                .collect()
        })
        .collect();
    let replicates: Vec<ReplicateResult> = per_rep.into_iter().flatten().collect();
    let summaries = methods
        .iter()
        .map(|&m| summarize(m, &replicates.iter().filter(|r| r.method == m).collect::<Vec<_>>(), groups))
        .collect();
    Ok(Comparison { replicates, summaries })
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl Comparison {
    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }

    pub fn replicate(&self, replicate: usize, method: Method) -> Option<&ReplicateResult> {
        self.replicates.iter().find(|r| r.replicate == replicate && r.method == method)
    }

    /// One row per method and metric: `method,metric,mean,sd,n`.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("method,metric,mean,sd,n\n");
        let mut row = |method: Method, metric: String, v: &MeanSd| {
            let _ = writeln!(out, "{},{},{},{},{}", method.name(), metric, v.mean, opt(v.sd), v.n);
        };
        for s in &self.summaries {
            if let Some(v) = &s.ari {
                row(s.method, "ari".into(), v);
            }
            for (g, v) in s.omega.iter().enumerate() {
                row(s.method, format!("omega_{}", g + 1), v);
            }
            for (g, v) in s.beta_errors.iter().enumerate() {
                row(s.method, format!("beta_error_{}", g + 1), v);
            }
            for (g, v) in s.sigma_errors.iter().enumerate() {
                row(s.method, format!("sigma_error_{}", g + 1), v);
            }
            if let Some(v) = &s.total_error {
                row(s.method, "total_error".into(), v);
            }
            if let Some(v) = &s.n_used {
                row(s.method, "n_used".into(), v);
            }
        }
        out
    }

    /// One row per replicate and method.
    pub fn replicate_csv(&self) -> String {
        let groups = self.summaries.first().map_or(0, |s| s.omega.len());
        let mut out = String::from("replicate,seed,method,ari,total_error,n_used,converged");
        for prefix in ["omega", "beta_error", "sigma_error"] {
            for g in 1..=groups {
                let _ = write!(out, ",{prefix}_{g}");
            }
        }
        out.push_str(",error\n");
        for r in &self.replicates {
            let _ = write!(out, "{},{},{}", r.replicate, r.seed, r.method.name());
            match &r.metrics {
                Some(m) => {
                    let _ = write!(out, ",{},{},{},{}", opt(m.ari), m.errors.total, m.n_used, m.converged);
                    for v in m.omega_hat.iter().chain(&m.errors.beta).chain(&m.errors.sigma) {
                        let _ = write!(out, ",{v}");
                    }
                    out.push_str(",\n");
                }
                None => {
                    out.push_str(&",".repeat(4 + 3 * groups));
                    let _ = writeln!(out, ",\"{}\"", r.error.as_deref().unwrap_or("").replace('"', "'"));
                }
            }
        }
        out
    }
}

/// Replicate whose ARI is the (lower) median for `method`.
pub fn median_ari_replicate(comparison: &Comparison, method: Method) -> Option<&ReplicateResult> {
    let mut scored: Vec<(&ReplicateResult, f64)> = comparison
        .replicates
        .iter()
        .filter(|r| r.method == method)
        .filter_map(|r| r.metrics.as_ref().and_then(|m| m.ari).map(|a| (r, a)))
        .collect();
    scored.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.replicate.cmp(&b.0.replicate)));
    scored.get(scored.len().saturating_sub(1) / 2).map(|(r, _)| *r)
}

/// Per-point labels of one replicate: responses, censoring codes, true and
/// predicted component (1-based) and whether they agree.
pub fn point_correctness_csv(sc: &ScenarioConfig, result: &ReplicateResult) -> Result<String> {
    let metrics = result.metrics.as_ref().ok_or_else(|| Error::InvalidInput("replicate has no fit".into()))?;
    if metrics.labels.is_empty() {
        return Err(Error::InvalidInput("replicate carries no per-point labels".into()));
    }
    let sim = generate(&ScenarioConfig { seed: result.seed, ..sc.clone() })?;
    if sim.data.n() != metrics.labels.len() {
        return Err(Error::InvalidInput("labels do not cover every row".into()));
    }
    let p = sim.data.p();
    let mut out = String::from("row");
    for j in 1..=p {
        let _ = write!(out, ",y{j}");
    }
    for j in 1..=p {
        let _ = write!(out, ",c{j}");
    }
    out.push_str(",true_label,predicted_label,correct\n");
    for i in 0..sim.data.n() {
        let _ = write!(out, "{}", i + 1);
        for j in 0..p {
            let _ = write!(out, ",{}", sim.data.y[(i, j)]);
        }
        for j in 0..p {
            let _ = write!(out, ",{}", sim.data.c[(i, j)]);
        }
        let (t, e) = (sim.labels[i], metrics.labels[i]);
        let _ = writeln!(out, ",{},{},{}", t + 1, e + 1, t == e);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Type1Row {
    pub component: usize,
    pub predictor: usize,
    pub response: usize,
    pub true_value: f64,
    pub rejections: usize,
    pub replicates: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Type1Table {
    /// Every coefficient; rows with `true_value == 0` are type-1 rates, the rest power.
    pub rows: Vec<Type1Row>,
    pub n_failed: usize,
    pub alpha: f64,
}

impl Type1Table {
    pub fn zero_rows(&self) -> impl Iterator<Item = &Type1Row> {
        self.rows.iter().filter(|r| r.true_value == 0.0)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("component,predictor,response,true_value,rejections,replicates,rate\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.component + 1,
                r.predictor,
                r.response + 1,
                r.true_value,
                r.rejections,
                r.replicates,
                r.rate
            );
        }
        out
    }
}

/// Rejection rates at level `alpha` of the Wald test of every coefficient,
/// over replicates fitted with the censored mixture and aligned to the truth.
pub fn type1_study(sc: &ScenarioConfig, n_replicates: usize, config: &FitConfig, alpha: f64) -> Result<Type1Table> {
    sc.validate()?;
    let truth = sc.truth()?;
    let (d, p) = truth.components[0].beta.shape();
    let groups = sc.groups();
    let outcomes: Vec<Option<Vec<bool>>> = (0..n_replicates)
        .into_par_iter()
        .map(|rep| {
            let run = || -> Result<Vec<bool>> {
                let sim = generate(&ScenarioConfig { seed: replicate_seed(sc.seed, rep), ..sc.clone() })?;
                let cfg = FitConfig { groups, seed: fit_seed(sc.seed, rep), ..*config };
                let fit = fit_mixture(&sim.data, &cfg)?;
                let perm = align_components(&truth, &fit.params)?;
                let info = empirical_information(&fit.params, &sim.data, &cfg.em.qmc)?;
                let report = wald_tests(&fit.params, &info, true)?;
                let mut rejected = Vec::with_capacity(groups * d * p);
                for &e in &perm {
                    for j in 0..p {
                        for r in 0..d {
                            let entry = report.entry(e, r, j).expect("entry for every coefficient");
                            rejected.push(entry.p.is_some_and(|pv| pv < alpha));
                        }
                    }
                }
                Ok(rejected)
            };
            run().map_err(|e| log::warn!("replicate {rep}: {e}")).ok()
        })
        .collect();
    let ok: Vec<&Vec<bool>> = outcomes.iter().flatten().collect();
    let mut rows = Vec::with_capacity(groups * d * p);
    let mut k = 0;
    for (g, comp) in truth.components.iter().enumerate() {
        for j in 0..p {
            for r in 0..d {
                let rejections = ok.iter().filter(|v| v[k]).count();
                rows.push(Type1Row {
                    component: g,
                    predictor: r,
                    response: j,
                    true_value: comp.beta[(r, j)],
                    rejections,
                    replicates: ok.len(),
                    rate: if ok.is_empty() { f64::NAN } else { rejections as f64 / ok.len() as f64 },
                });
                k += 1;
            }
        }
    }
    Ok(Type1Table { rows, n_failed: n_replicates - ok.len(), alpha })
}
