//! `backtest`: Growth-at-Risk backtests and their CSV artifacts.

use std::path::{Path, PathBuf};

use cqe_core::gar::{run_backtest, BacktestResult, MacroDataset};
use rayon::prelude::*;

use crate::config::BacktestSettings;
use crate::error::{CliError, CliResult};
use crate::macro_csv::{load_macro_csv, LoadReport};
use crate::output::{fmt_f64, write_table, Provenance, Table};

/// Runs every configured (mode, horizon) backtest; configurations run in
/// parallel, origins within one backtest sequentially.
pub fn run_all(ds: &MacroDataset, settings: &BacktestSettings, threads: usize) -> CliResult<Vec<BacktestResult>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Internal(format!("thread pool: {e}")))?;
    let results = pool.install(|| {
        settings
            .configs
            .par_iter()
            .map(|cfg| run_backtest(ds, cfg))
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(results)
}

pub fn load(settings: &BacktestSettings) -> CliResult<(MacroDataset, LoadReport)> {
    load_macro_csv(&settings.data, &settings.schema, &settings.modes())
}

fn provenance(settings: &BacktestSettings, report: &LoadReport) -> Provenance {
    let mut p = Provenance::new("backtest");
    let first = &settings.configs[0];
    p.push("data", settings.data.display())
        .push("rows_read", report.rows_read)
        .push("dropped_missing_target", report.dropped_missing_target)
        .push("dropped_missing_predictor", report.dropped_missing_predictor)
        .push("seed", first.seed)
        .push("min_train", first.min_train)
        .push("pca_variance", first.pca_variance)
        .push("grid_size", first.quantile_grid.len());
    p
}

/// `date, model, pit` rows (plus mode, horizon and the realised target).
pub fn pit_table(results: &[BacktestResult]) -> Table {
    let mut t = Table::new(["date", "model", "pit", "mode", "horizon", "target_date", "realized"]);
    for r in results {
        for m in &r.models {
            for rec in &m.records {
                t.push(vec![
                    rec.date.to_string(),
                    m.model.label().into(),
                    rec.pit.as_ref().map_or_else(|_| "NA".into(), |&p| fmt_f64(p)),
                    r.mode.key().into(),
                    r.horizon.to_string(),
                    rec.target_date.to_string(),
                    fmt_f64(rec.realized),
                ]);
            }
        }
    }
    t
}

/// MAE of the PIT calibration curve per model, mode and horizon.
pub fn gar_summary_table(results: &[BacktestResult]) -> Table {
    let mut t = Table::new([
        "model", "mode", "horizon", "mae", "ks", "n_pit", "failed_origins", "clamped_origins",
    ]);
    for r in results {
        for m in &r.models {
            t.push(vec![
                m.model.label().into(),
                r.mode.key().into(),
                r.horizon.to_string(),
                fmt_f64(m.mae),
                fmt_f64(m.ks),
                (m.records.len() - m.failed_origins).to_string(),
                m.failed_origins.to_string(),
                m.clamped_origins.to_string(),
            ]);
        }
    }
    t
}

pub fn write_outputs(
    out: &Path,
    settings: &BacktestSettings,
    report: &LoadReport,
    results: &[BacktestResult],
) -> CliResult<Vec<PathBuf>> {
    let prov = provenance(settings, report);
    let mut written = vec![
        write_table(&out.join("pit.csv"), &pit_table(results), &prov)?,
        write_table(&out.join("gar_summary.csv"), &gar_summary_table(results), &prov)?,
    ];
    let mut keys: Vec<(String, usize)> = Vec::new();
    for r in results {
        for m in &r.models {
            let key = (m.model.key().to_string(), r.horizon);
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
    }
    for (model, h) in keys {
        let mut t = Table::new(["mode", "level", "pit_cdf"]);
        for r in results.iter().filter(|r| r.horizon == h) {
            if let Some(m) = r.models.iter().find(|m| m.model.key() == model) {
                for &(l, c) in &m.curve {
                    t.push(vec![r.mode.key().into(), fmt_f64(l), fmt_f64(c)]);
                }
            }
        }
        let path = out.join("gar_curves").join(format!("{model}_h{h}.csv"));
        written.push(write_table(&path, &t, &prov)?);
    }
    Ok(written)
}
