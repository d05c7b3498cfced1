//! BIC and ICL criteria and the sweep over the number of components.
//!
//! Criteria are maximized: `BIC = l - (nu/2) ln N` and `ICL = BIC - entropy`.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::CensoredDataset;
use crate::error::{Error, Result};
use crate::mixture::{classify, fit_mixture, FitConfig, FitResult, Responsibilities};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntropyKind {
    /// `-sum_ig z_ig ln z_ig` over the posterior probabilities.
    #[default]
    Posterior,
    /// `-sum_i ln z_{i, map(i)}` using only the MAP assignment.
    HardAssignment,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Criteria {
    pub bic: f64,
    pub entropy: f64,
    pub icl: f64,
}

fn xlogx(z: f64) -> f64 {
    if z > 0.0 {
        z * z.ln()
    } else {
        0.0
    }
}

pub fn entropy(resp: &Responsibilities, kind: EntropyKind) -> f64 {
    match kind {
        EntropyKind::Posterior => -resp.z.iter().map(|&z| xlogx(z)).sum::<f64>(),
        EntropyKind::HardAssignment => classify(resp)
            .iter()
            .enumerate()
            .map(|(i, &g)| {
                let z = resp.z[(i, g)];
                if z > 0.0 {
                    -z.ln()
                } else {
                    0.0
                }
            })
            .sum(),
    }
}

pub fn criteria(loglik: f64, n_params: usize, n_obs: usize, resp: &Responsibilities, kind: EntropyKind) -> Criteria {
    let bic = loglik - 0.5 * n_params as f64 * (n_obs as f64).ln();
    let entropy = entropy(resp, kind);
    Criteria { bic, entropy, icl: bic - entropy }
}

pub fn icl_bic(fit: &FitResult, n_obs: usize) -> Criteria {
    criteria(fit.loglik, fit.n_params, n_obs, &fit.resp, EntropyKind::Posterior)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub groups: usize,
    pub loglik: Option<f64>,
    pub nu: usize,
    pub criteria: Option<Criteria>,
    pub n_converged: usize,
    pub chosen: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionTable {
    pub rows: Vec<SelectionRow>,
    pub entropy: EntropyKind,
}

impl SelectionTable {
    pub fn chosen(&self) -> usize {
        self.rows.iter().find(|r| r.chosen).map(|r| r.groups).expect("exactly one chosen row")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("G,loglik,nu,bic,entropy,icl,n_converged,chosen\n");
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.rows {
            let c = r.criteria;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.groups,
                opt(r.loglik),
                r.nu,
                opt(c.map(|c| c.bic)),
                opt(c.map(|c| c.entropy)),
                opt(c.map(|c| c.icl)),
                r.n_converged,
                r.chosen
            );
        }
        out
    }
}

/// Result of a sweep: the table plus every successful fit keyed by `G`.
#[derive(Debug, Clone)]
pub struct Selection {
    pub table: SelectionTable,
    pub fits: Vec<(usize, FitResult)>,
}

impl Selection {
    pub fn fit_for(&self, groups: usize) -> Option<&FitResult> {
        self.fits.iter().find(|(g, _)| *g == groups).map(|(_, f)| f)
    }
}

/// Fits every `G` in `g_range` and marks the ICL maximizer (ties to smaller `G`).
/// `G` values without a converged restart are tabulated but not eligible.
pub fn select_g(data: &CensoredDataset, g_range: &[usize], config: &FitConfig, kind: EntropyKind) -> Result<Selection> {
    if g_range.is_empty() {
        return Err(Error::InvalidInput("empty range of component counts".into()));
    }
    let mut gs = g_range.to_vec();
    gs.sort_unstable();
    gs.dedup();
    let fits: Vec<(usize, Result<FitResult>)> =
        gs.par_iter().map(|&g| (g, fit_mixture(data, &FitConfig { groups: g, ..*config }))).collect();

    let mut rows = Vec::with_capacity(fits.len());
    let mut kept = Vec::new();
    for (g, fit) in fits {
        let nu = crate::mixture::n_free_params(g, data.d(), data.p());
        match fit {
            Ok(fit) if fit.diagnostics.n_converged > 0 => {
                let c = criteria(fit.loglik, fit.n_params, data.n(), &fit.resp, kind);
                rows.push(SelectionRow {
                    groups: g,
                    loglik: Some(fit.loglik),
                    nu,
                    criteria: Some(c),
                    n_converged: fit.diagnostics.n_converged,
                    chosen: false,
                });
                kept.push((g, fit));
            }
            Ok(fit) => {
                rows.push(SelectionRow { groups: g, loglik: None, nu, criteria: None, n_converged: 0, chosen: false });
                kept.push((g, fit));
            }
            Err(e) => {
                log::warn!("G={g}: {e}");
                rows.push(SelectionRow { groups: g, loglik: None, nu, criteria: None, n_converged: 0, chosen: false });
            }
        }
    }
    let best = rows
        .iter()
        .enumerate()
        .filter_map(|(k, r)| r.criteria.map(|c| (k, c.icl)))
        .fold(None::<(usize, f64)>, |acc, (k, icl)| match acc {
            Some((_, b)) if b >= icl => acc,
            _ => Some((k, icl)),
        });
    let Some((best, _)) = best else {
        return Err(Error::FitFailed("no component count produced a converged fit".into()));
    };
    rows[best].chosen = true;
    Ok(Selection { table: SelectionTable { rows, entropy: kind }, fits: kept })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    #[test]
    fn uniform_responsibilities_entropy() {
        let resp = Responsibilities { z: DMatrix::from_element(10, 2, 0.5) };
        assert_abs_diff_eq!(entropy(&resp, EntropyKind::Posterior), 10.0 * 2f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(entropy(&resp, EntropyKind::HardAssignment), 10.0 * 2f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn hard_responsibilities_make_icl_equal_bic() {
        let resp = Responsibilities { z: DMatrix::from_fn(6, 3, |i, g| if i % 3 == g { 1.0 } else { 0.0 }) };
        let c = criteria(-12.5, 7, 6, &resp, EntropyKind::Posterior);
        assert_eq!(c.entropy, 0.0);
        assert_eq!(c.icl, c.bic);
        assert_abs_diff_eq!(c.bic, -12.5 - 3.5 * 6f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn csv_has_fixed_header_and_blank_missing_cells() {
        let table = SelectionTable {
            rows: vec![
                SelectionRow { groups: 1, loglik: Some(-10.0), nu: 3, criteria: Some(Criteria { bic: -11.0, entropy: 0.0, icl: -11.0 }), n_converged: 2, chosen: true },
                SelectionRow { groups: 2, loglik: None, nu: 7, criteria: None, n_converged: 0, chosen: false },
            ],
            entropy: EntropyKind::Posterior,
        };
        let csv = table.to_csv();
        assert_eq!(csv, "G,loglik,nu,bic,entropy,icl,n_converged,chosen\n1,-10,3,-11,0,-11,2,true\n2,,7,,,,0,false\n");
        assert_eq!(table.chosen(), 1);
    }
}
