//! CSV and JSON ingestion and the tabular output files.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use censgmr::dataset::{CensoredDataset, DetectionLimits};
use censgmr::mixture::Responsibilities;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Detection limits of one response column; `null` means unbounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitEntry {
    pub name: String,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

pub type LimitsConfig = Vec<LimitEntry>;

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let file = File::open(path).map_err(|e| CliError::io(format!("cannot open {}", path.display()), e))?;
    serde_json::from_reader(std::io::BufReader::new(file)).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    let mut f = File::create(path).map_err(|e| CliError::io(format!("cannot create {}", path.display()), e))?;
    f.write_all(contents.as_bytes()).map_err(|e| CliError::io(format!("cannot write {}", path.display()), e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseCensoring {
    pub response: String,
    pub left: usize,
    pub right: usize,
    /// Values strictly beyond a limit that were moved onto it.
    pub clipped: usize,
}

#[derive(Debug, Clone)]
pub struct LoadedData {
    pub data: CensoredDataset,
    pub responses: Vec<String>,
    /// Design column names, `(intercept)` first when present.
    pub predictors: Vec<String>,
    pub censoring: Vec<ResponseCensoring>,
}

fn limits_for(responses: &[String], config: Option<&LimitsConfig>) -> CliResult<Vec<DetectionLimits>> {
    let Some(config) = config else {
        return Ok(vec![DetectionLimits::NONE; responses.len()]);
    };
    for entry in config {
        if !responses.contains(&entry.name) {
            return Err(CliError::Input(format!("limits given for '{}', which is not a response column", entry.name)));
        }
    }
    responses
        .iter()
        .map(|name| match config.iter().find(|e| &e.name == name) {
            Some(e) => DetectionLimits::new(e.lower.unwrap_or(f64::NEG_INFINITY), e.upper.unwrap_or(f64::INFINITY))
                .map_err(|err| CliError::Input(format!("limits of '{name}': {err}"))),
            None => Ok(DetectionLimits::NONE),
        })
        .collect()
}

/// Reads the designated columns of a headed CSV, derives censoring codes
/// from the limits and prepends an intercept column when asked.
pub fn load_dataset(
    data_path: &Path,
    limits_path: Option<&Path>,
    responses: &[String],
    predictors: &[String],
    intercept: bool,
) -> CliResult<LoadedData> {
    if responses.is_empty() {
        return Err(CliError::Input("at least one response column is required".into()));
    }
    let limits_config: Option<LimitsConfig> = limits_path.map(read_json).transpose()?;
    let limits = limits_for(responses, limits_config.as_ref())?;
    let file = File::open(data_path).map_err(|e| CliError::io(format!("cannot open {}", data_path.display()), e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(std::io::BufReader::new(file));
    let headers = reader.headers().map_err(|e| CliError::Input(format!("{}: {e}", data_path.display())))?.clone();
    let column = |name: &String| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Input(format!("column '{name}' not found in {}", data_path.display())))
    };
    let resp_idx: Vec<usize> = responses.iter().map(column).collect::<CliResult<_>>()?;
    let pred_idx: Vec<usize> = predictors.iter().map(column).collect::<CliResult<_>>()?;

    let mut y_rows: Vec<Vec<f64>> = Vec::new();
    let mut x_rows: Vec<Vec<f64>> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let line = r + 2;
        let record = record.map_err(|e| CliError::Input(format!("{}: row {line}: {e}", data_path.display())))?;
        let cell = |idx: usize, name: &String| -> CliResult<f64> {
            let raw = record.get(idx).unwrap_or("");
            if raw.is_empty() {
                return Err(CliError::Input(format!("row {line}, column '{name}': missing value")));
            }
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::Input(format!("row {line}, column '{name}': '{raw}' is not a finite number")))
        };
        y_rows.push(resp_idx.iter().zip(responses).map(|(&i, n)| cell(i, n)).collect::<CliResult<_>>()?);
        x_rows.push(pred_idx.iter().zip(predictors).map(|(&i, n)| cell(i, n)).collect::<CliResult<_>>()?);
    }
    let n = y_rows.len();
    if n == 0 {
        return Err(CliError::Input(format!("{} has no data rows", data_path.display())));
    }
    let p = responses.len();
    let d = pred_idx.len() + usize::from(intercept);
    if d == 0 {
        return Err(CliError::Input("the design has no columns (give predictors or keep the intercept)".into()));
    }
    let y = DMatrix::from_fn(n, p, |i, j| y_rows[i][j]);
    let x = DMatrix::from_fn(n, d, |i, k| if intercept { if k == 0 { 1.0 } else { x_rows[i][k - 1] } } else { x_rows[i][k] });
    let mut censoring = Vec::with_capacity(p);
    for (j, name) in responses.iter().enumerate() {
        let lim = limits[j];
        let clipped = y.column(j).iter().filter(|&&v| v < lim.lower || v > lim.upper).count();
        if clipped > 0 {
            log::warn!("{clipped} value(s) of '{name}' lie beyond its detection limits and are treated as censored at the limit");
        }
        censoring.push(ResponseCensoring { response: name.clone(), left: 0, right: 0, clipped });
    }
    let data = CensoredDataset::from_latent(&y, x, limits, intercept)?;
    for (entry, (left, right)) in censoring.iter_mut().zip(data.censor_counts()) {
        entry.left = left;
        entry.right = right;
    }
    let mut names = Vec::with_capacity(d);
    if intercept {
        names.push("(intercept)".to_string());
    }
    names.extend(predictors.iter().cloned());
    Ok(LoadedData { data, responses: responses.to_vec(), predictors: names, censoring })
}

pub fn responsibilities_csv(resp: &Responsibilities) -> String {
    let mut out = String::from("row");
    for g in 1..=resp.z.ncols() {
        out.push_str(&format!(",g{g}"));
    }
    out.push('\n');
    for (i, row) in resp.z.row_iter().enumerate() {
        out.push_str(&(i + 1).to_string());
        for v in row.iter() {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

/// One row per observation: 1-based row id, 1-based label, its posterior.
pub fn classification_csv(labels: &[usize], resp: &Responsibilities) -> String {
    let mut out = String::from("row,label,max_posterior\n");
    for (i, &g) in labels.iter().enumerate() {
        out.push_str(&format!("{},{},{}\n", i + 1, g + 1, resp.z[(i, g)]));
    }
    out
}

fn read_csv_rows(path: &Path) -> CliResult<(csv::StringRecord, Vec<csv::StringRecord>)> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let headers = reader.headers().map_err(|e| CliError::Input(e.to_string()))?.clone();
    let rows = reader.records().collect::<Result<Vec<_>, _>>().map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok((headers, rows))
}

fn parse_cell<T: std::str::FromStr>(record: &csv::StringRecord, k: usize, path: &Path) -> CliResult<T> {
    record
        .get(k)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| CliError::Input(format!("{}: malformed cell in column {}", path.display(), k + 1)))
}

pub fn read_responsibilities(path: &Path) -> CliResult<Responsibilities> {
    let (headers, rows) = read_csv_rows(path)?;
    let g = headers.len().saturating_sub(1);
    let mut z = DMatrix::zeros(rows.len(), g);
    for (i, r) in rows.iter().enumerate() {
        for k in 0..g {
            z[(i, k)] = parse_cell(r, k + 1, path)?;
        }
    }
    Ok(Responsibilities { z })
}

/// Returns 0-based labels and the posterior of each.
pub fn read_classification(path: &Path) -> CliResult<(Vec<usize>, Vec<f64>)> {
    let (_, rows) = read_csv_rows(path)?;
    let mut labels = Vec::with_capacity(rows.len());
    let mut post = Vec::with_capacity(rows.len());
    for r in &rows {
        let label: usize = parse_cell(r, 1, path)?;
        if label == 0 {
            return Err(CliError::Input(format!("{}: labels are 1-based", path.display())));
        }
        labels.push(label - 1);
        post.push(parse_cell(r, 2, path)?);
    }
    Ok((labels, post))
}
