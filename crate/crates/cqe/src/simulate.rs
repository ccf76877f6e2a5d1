//! `simulate`: parallel simulation study and its CSV artifacts.

use std::path::{Path, PathBuf};

use cqe_core::dgp::{simulate, SeriesFrame};
use cqe_core::evaluation::{classify_level, wilson_interval, Z95};
use cqe_core::experiments::{aggregate, run_iteration, ExperimentConfig, ExperimentResult};
use rayon::prelude::*;

use crate::error::{CliError, CliResult};
use crate::output::{fmt_f64, write_table, Provenance, Table};

/// Runs every iteration on a pool of `threads` workers (0 = all cores) and
/// aggregates. The result does not depend on the thread count.
pub fn run_parallel(cfg: &ExperimentConfig, threads: usize) -> CliResult<ExperimentResult> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Internal(format!("thread pool: {e}")))?;
    let outcomes = pool.install(|| {
        (0..cfg.iterations)
            .into_par_iter()
            .map(|i| run_iteration(cfg, i))
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(aggregate(cfg, &outcomes)?)
}

pub fn provenance(cfg: &ExperimentConfig) -> Provenance {
    let mut p = Provenance::new("simulate");
    p.push("config_fingerprint", format!("{:016x}", cfg.fingerprint()))
        .push("seed", cfg.master_seed)
        .push("dgp", format!("{:?} phi={:?} noise={:?} p={}", cfg.dgp.kind, cfg.dgp.phi, cfg.dgp.noise, cfg.dgp.p))
        .push("n_train", cfg.n_train)
        .push("n_test", cfg.n_test)
        .push("n_lags", cfg.n_lags)
        .push("iterations", cfg.iterations)
        .push(
            "levels",
            cfg.levels.iter().map(|l| format!("{l}")).collect::<Vec<_>>().join(" "),
        );
    p
}

/// One row per (model, level): pooled coverage, Wilson interval, class.
pub fn result_table(cfg: &ExperimentConfig, r: &ExperimentResult) -> CliResult<Table> {
    let mut t = Table::new([
        "model", "level", "coverage", "successes", "n", "wilson_lo", "wilson_hi", "class", "na_cells",
    ]);
    for m in &r.models {
        for (li, &level) in cfg.levels.iter().enumerate() {
            let na = m.per_iteration[li].iter().filter(|v| v.is_nan()).count();
            let row = match m.pooled.iter().find(|c| c.level == level) {
                Some(c) => {
                    let ci = wilson_interval(c.successes, c.n, Z95)?;
                    vec![
                        m.model.label().into(),
                        fmt_f64(level),
                        fmt_f64(c.successes as f64 / c.n as f64),
                        c.successes.to_string(),
                        c.n.to_string(),
                        fmt_f64(ci.lo),
                        fmt_f64(ci.hi),
                        classify_level(level, &ci).as_str().into(),
                        na.to_string(),
                    ]
                }
                None => vec![
                    m.model.label().into(),
                    fmt_f64(level),
                    "NA".into(),
                    "0".into(),
                    "0".into(),
                    "NA".into(),
                    "NA".into(),
                    "NA".into(),
                    na.to_string(),
                ],
            };
            t.push(row);
        }
    }
    Ok(t)
}

/// MAE table: one row per model.
pub fn summary_table(r: &ExperimentResult) -> Table {
    let mut t = Table::new(["model", "mae", "mae_per_cell", "excluded_cells", "partial", "degenerate"]);
    for m in &r.models {
        t.push(vec![
            m.model.label().into(),
            fmt_f64(m.report.pooled_mae),
            fmt_f64(m.report.mae),
            m.report.excluded_cells.to_string(),
            (!m.errors.is_empty()).to_string(),
            r.degenerate.to_string(),
        ]);
    }
    t
}

/// Within/below/above percentages per model.
pub fn classification_table(r: &ExperimentResult) -> Table {
    let mut t = Table::new(["model", "within_ci", "below_ci", "above_ci"]);
    for m in &r.models {
        let c = &m.report.classification;
        t.push(vec![
            m.model.label().into(),
            fmt_f64(c.within_pct),
            fmt_f64(c.below_pct),
            fmt_f64(c.above_pct),
        ]);
    }
    t
}

pub fn curve_table(points: &[(f64, f64)]) -> Table {
    let mut t = Table::new(["level", "coverage"]);
    for &(l, c) in points {
        t.push(vec![fmt_f64(l), fmt_f64(c)]);
    }
    t
}

/// `t, y, x_1..x_p` rows of a simulated series.
pub fn series_table(frame: &SeriesFrame) -> Table {
    let mut header = vec!["t".to_string(), "y".to_string()];
    header.extend((1..=frame.p).map(|j| format!("x_{j}")));
    let mut t = Table::new(header);
    for (i, y) in frame.y.iter().enumerate() {
        let mut row = vec![i.to_string(), format!("{y:.12e}")];
        row.extend(frame.x_row(i).iter().map(|v| format!("{v:.12e}")));
        t.push(row);
    }
    t
}

/// Writes all simulation artifacts into `out` and returns their paths.
pub fn write_outputs(out: &Path, cfg: &ExperimentConfig, r: &ExperimentResult) -> CliResult<Vec<PathBuf>> {
    let mut prov = provenance(cfg);
    prov.push("partial", r.partial).push("degenerate", r.degenerate);
    for n in &r.notes {
        prov.push("note", n);
    }
    let mut written = vec![
        write_table(&out.join("result.csv"), &result_table(cfg, r)?, &prov)?,
        write_table(&out.join("summary.csv"), &summary_table(r), &prov)?,
        write_table(&out.join("classification.csv"), &classification_table(r), &prov)?,
    ];
    for m in &r.models {
        let path = out.join("curves").join(format!("{}.csv", m.model.key()));
        written.push(write_table(&path, &curve_table(&m.report.curve), &prov)?);
    }
    Ok(written)
}

/// Writes the series of iteration `iteration` to `path`.
pub fn export_series(path: &Path, cfg: &ExperimentConfig, iteration: usize) -> CliResult<PathBuf> {
    let spec = cfg.dgp.with_seed(cfg.iteration_seed(iteration));
    let frame = simulate(&spec, cfg.n_lags + cfg.n_train + cfg.n_test)?;
    let mut prov = provenance(cfg);
    prov.push("iteration", iteration);
    write_table(path, &series_table(&frame), &prov)
}
