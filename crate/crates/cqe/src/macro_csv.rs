//! Loader for quarterly macro-financial CSV files.
//!
//! Expected layout: a header row, one row per quarter, a date column
//! (`YYYY-MM-DD`, `YYYY-MM` or `YYYYQn`) and numeric columns. Missing values
//! may be empty, `NA`, `NaN` or `.`.

use std::path::Path;

use cqe_core::gar::{Components, MacroDataset, PredictorMode, Quarter};

use crate::config::MacroSchema;
use crate::error::{CliError, CliResult};

/// Row accounting of a load.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub rows_read: usize,
    pub dropped_missing_target: usize,
    pub dropped_missing_predictor: usize,
    /// Number of non-adjacent quarter transitions in the kept rows.
    pub gaps: usize,
}

fn is_missing(s: &str) -> bool {
    matches!(s.trim(), "" | "NA" | "NaN" | "nan" | "." | "null")
}

fn column(headers: &csv::StringRecord, name: &str, path: &Path) -> CliResult<usize> {
    headers.iter().position(|h| h.trim() == name).ok_or_else(|| CliError::SchemaMismatch {
        path: path.to_path_buf(),
        message: format!("missing column {name:?}"),
    })
}

/// Loads a dataset, keeping only the columns the predictor modes need.
pub fn load_macro_csv(
    path: &Path,
    schema: &MacroSchema,
    modes: &[PredictorMode],
) -> CliResult<(MacroDataset, LoadReport)> {
    let needs_nfci = modes.contains(&PredictorMode::NfciPlusLag);
    let needs_components = modes.contains(&PredictorMode::ComponentsPcaPlusLag);
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Csv {
            path: path.to_path_buf(),
            source: e,
        })?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Csv {
            path: path.to_path_buf(),
            source: e,
        })?
        .clone();
    let date_col = column(&headers, &schema.date, path)?;
    let gdp_col = column(&headers, &schema.gdp, path)?;
    let nfci_col = match (needs_nfci, &schema.nfci) {
        (true, Some(name)) => Some(column(&headers, name, path)?),
        (true, None) => {
            return Err(CliError::SchemaMismatch {
                path: path.to_path_buf(),
                message: "nfci_plus_lag mode needs an nfci column".into(),
            })
        }
        _ => None,
    };
    let comp_cols: Vec<(usize, String)> = if needs_components {
        let mut cols = Vec::new();
        for name in &schema.components {
            cols.push((column(&headers, name, path)?, name.clone()));
        }
        if let Some(prefix) = &schema.component_prefix {
            for (i, h) in headers.iter().enumerate() {
                if h.starts_with(prefix.as_str()) && !cols.iter().any(|(c, _)| *c == i) {
                    cols.push((i, h.to_string()));
                }
            }
        }
        if cols.is_empty() {
            return Err(CliError::SchemaMismatch {
                path: path.to_path_buf(),
                message: "components_pca_plus_lag mode needs component columns \
                          (set component_columns or component_prefix)"
                    .into(),
            });
        }
        cols
    } else {
        Vec::new()
    };

    let mut report = LoadReport::default();
    let mut dates = Vec::new();
    let mut gdp = Vec::new();
    let mut nfci = Vec::new();
    let mut comps = Vec::new();
    let mut previous: Option<Quarter> = None;
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| CliError::Csv {
            path: path.to_path_buf(),
            source: e,
        })?;
        report.rows_read += 1;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let date = Quarter::parse(field(date_col)).map_err(|_| CliError::SchemaMismatch {
            path: path.to_path_buf(),
            message: format!("row {row}, column {:?}: bad date {:?}", schema.date, field(date_col)),
        })?;
        if previous.is_some_and(|p| p >= date) {
            return Err(CliError::NonMonotoneDates {
                path: path.to_path_buf(),
                row,
                date: field(date_col).to_string(),
            });
        }
        previous = Some(date);
        let number = |c: usize, name: &str| -> CliResult<Option<f64>> {
            let s = field(c);
            if is_missing(s) {
                return Ok(None);
            }
            s.trim().parse::<f64>().map(Some).map_err(|_| CliError::SchemaMismatch {
                path: path.to_path_buf(),
                message: format!("row {row}, column {name:?}: not a number: {s:?}"),
            })
        };
        let Some(g) = number(gdp_col, &schema.gdp)? else {
            report.dropped_missing_target += 1;
            continue;
        };
        let n = match nfci_col {
            Some(c) => match number(c, schema.nfci.as_deref().unwrap_or("nfci"))? {
                Some(v) => Some(v),
                None => {
                    report.dropped_missing_predictor += 1;
                    continue;
                }
            },
            None => None,
        };
        let mut row_comps = Vec::with_capacity(comp_cols.len());
        for (c, name) in &comp_cols {
            match number(*c, name)? {
                Some(v) => row_comps.push(v),
                None => break,
            }
        }
        if row_comps.len() != comp_cols.len() {
            report.dropped_missing_predictor += 1;
            continue;
        }
        dates.push(date);
        gdp.push(g);
        if let Some(v) = n {
            nfci.push(v);
        }
        comps.extend(row_comps);
    }
    if report.dropped_missing_target > 0 {
        log::warn!(
            "{}: dropped {} rows with a missing {:?} value",
            path.display(),
            report.dropped_missing_target,
            schema.gdp
        );
    }
    if report.dropped_missing_predictor > 0 {
        log::warn!(
            "{}: dropped {} rows with missing predictors",
            path.display(),
            report.dropped_missing_predictor
        );
    }
    if dates.is_empty() {
        return Err(CliError::SchemaMismatch {
            path: path.to_path_buf(),
            message: "no usable data rows".into(),
        });
    }
    let components = (!comp_cols.is_empty()).then(|| Components {
        names: comp_cols.iter().map(|(_, n)| n.clone()).collect(),
        values: comps,
    });
    let ds = MacroDataset::new(dates, gdp, nfci_col.map(|_| nfci), components)?;
    report.gaps = ds.gaps().len();
    if report.gaps > 0 {
        log::warn!("{}: {} gaps between consecutive quarters", path.display(), report.gaps);
    }
    Ok((ds, report))
}
