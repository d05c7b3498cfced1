//! JSON fit report and its human-readable rendering.

use std::fmt::Write as _;
use std::path::Path;

use censgmr::inference::{Stationarity, WaldReport};
use censgmr::mixture::{FitDiagnostics, FitResult, RestartSummary};
use censgmr::selection::Criteria;
use serde::{Deserialize, Serialize};

use crate::error::CliResult;
use crate::io::{self, LoadedData, ResponseCensoring};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientReport {
    pub predictor: String,
    pub response: String,
    pub estimate: f64,
    pub se: Option<f64>,
    pub z: Option<f64>,
    pub p: Option<f64>,
    pub sig_005: bool,
    pub sig_001: bool,
    pub sig_0001: bool,
    pub sig_bonferroni: bool,
}

impl CoefficientReport {
    fn stars(&self) -> &'static str {
        match (self.sig_0001, self.sig_001, self.sig_005) {
            (true, _, _) => "***",
            (_, true, _) => "**",
            (_, _, true) => "*",
            _ => "",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentReport {
    /// 1-based, in canonical order.
    pub component: usize,
    pub omega: f64,
    pub beta: Vec<CoefficientReport>,
    /// Row-major covariance of the responses.
    pub sigma: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub groups: usize,
    pub n_params: usize,
    pub n_obs: usize,
    pub responses: Vec<String>,
    pub predictors: Vec<String>,
    pub converged: bool,
    pub iterations: usize,
    pub final_rel_change: f64,
    pub diagnostics: FitDiagnostics,
    pub restarts: Vec<RestartSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFiles {
    pub responsibilities: String,
    pub classification: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model: ModelSummary,
    pub loglik: f64,
    /// Maximized form: larger is better.
    pub bic: f64,
    pub entropy: f64,
    pub icl: f64,
    pub omega: Vec<f64>,
    pub components: Vec<ComponentReport>,
    pub bonferroni_tests: usize,
    pub pseudo_inverse: bool,
    pub stationarity: Stationarity,
    pub censoring: Vec<ResponseCensoring>,
    pub files: OutputFiles,
}

pub const RESPONSIBILITIES_FILE: &str = "responsibilities.csv";
pub const CLASSIFICATION_FILE: &str = "classification.csv";
pub const REPORT_FILE: &str = "report.json";

impl FitReport {
    pub fn build(loaded: &LoadedData, fit: &FitResult, wald: &WaldReport, criteria: Criteria, stationarity: Stationarity) -> Self {
        let components = fit
            .params
            .components
            .iter()
            .enumerate()
            .map(|(g, c)| ComponentReport {
                component: g + 1,
                omega: fit.params.omega[g],
                beta: wald
                    .entries
                    .iter()
                    .filter(|e| e.component == g)
                    .map(|e| CoefficientReport {
                        predictor: loaded.predictors[e.predictor].clone(),
                        response: loaded.responses[e.response].clone(),
                        estimate: e.estimate,
                        se: e.se,
                        z: e.z,
                        p: e.p,
                        sig_005: e.sig_005,
                        sig_001: e.sig_001,
                        sig_0001: e.sig_0001,
                        sig_bonferroni: e.sig_bonferroni,
                    })
                    .collect(),
                sigma: c.sigma.row_iter().map(|r| r.iter().copied().collect()).collect(),
            })
            .collect();
        Self {
            model: ModelSummary {
                groups: fit.params.groups(),
                n_params: fit.n_params,
                n_obs: fit.n_obs,
                responses: loaded.responses.clone(),
                predictors: loaded.predictors.clone(),
                converged: fit.converged(),
                iterations: fit.trace.iterations,
                final_rel_change: fit.trace.final_rel_change,
                diagnostics: fit.diagnostics.clone(),
                restarts: fit.restart_summaries.clone(),
            },
            loglik: fit.loglik,
            bic: criteria.bic,
            entropy: criteria.entropy,
            icl: criteria.icl,
            omega: fit.params.omega.clone(),
            components,
            bonferroni_tests: wald.bonferroni_tests,
            pseudo_inverse: wald.pseudo_inverse,
            stationarity,
            censoring: loaded.censoring.clone(),
            files: OutputFiles { responsibilities: RESPONSIBILITIES_FILE.into(), classification: CLASSIFICATION_FILE.into() },
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        io::read_json(path)
    }

    pub fn coefficient(&self, component: usize, predictor: &str, response: &str) -> Option<&CoefficientReport> {
        self.components
            .get(component)?
            .beta
            .iter()
            .find(|c| c.predictor == predictor && c.response == response)
    }

    /// Coefficient table per component with significance stars.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let m = &self.model;
        let _ = writeln!(
            out,
            "G = {}  N = {}  loglik = {:.4}  BIC = {:.4}  ICL = {:.4}  converged = {} ({} iterations)",
            m.groups, m.n_obs, self.loglik, self.bic, self.icl, m.converged, m.iterations
        );
        let _ = writeln!(out, "restarts: {} converged, {} not converged, {} collapsed, {} failed",
            m.diagnostics.n_converged, m.diagnostics.n_not_converged, m.diagnostics.n_collapsed, m.diagnostics.n_failed);
        let width = m.predictors.iter().map(String::len).max().unwrap_or(0).max(9);
        for c in &self.components {
            let _ = writeln!(out, "\ncomponent {} (omega = {:.3})", c.component, c.omega);
            let _ = write!(out, "{:width$}", "");
            for r in &m.responses {
                let _ = write!(out, " {:>16}", r);
            }
            out.push('\n');
            for pred in &m.predictors {
                let _ = write!(out, "{pred:width$}");
                for r in &m.responses {
                    let cell = c
                        .beta
                        .iter()
                        .find(|b| &b.predictor == pred && &b.response == r)
                        .map(|b| format!("{:.4}{:<3}", b.estimate, b.stars()))
                        .unwrap_or_default();
                    let _ = write!(out, " {cell:>16}");
                }
                out.push('\n');
            }
        }
        let _ = writeln!(out, "\n*: p<0.05; **: p<0.01; ***: p<0.001 (Bonferroni over {} tests in the report)", self.bonferroni_tests);
        out
    }
}
