//! `report`: merges the artifacts of several runs into one comparison table.
//!
//! A run is any directory (the given root or one of its immediate
//! subdirectories) holding a `summary.csv` or `gar_summary.csv`. The merged
//! table has one row per (section, model) and one column per run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{CliError, CliResult};
use crate::output::{read_table, write_atomic, write_table, Provenance, Table};

#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub name: String,
    pub dir: PathBuf,
    /// (section, model) -> value.
    pub values: BTreeMap<(String, String), String>,
    /// Quantile levels of the simulation, if a `result.csv` is present.
    pub levels: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub runs: Vec<RunArtifacts>,
    pub table: Table,
    /// Set when runs used different level sets.
    pub conflicting_levels: bool,
}

fn column_index(t: &Table, name: &str, path: &Path) -> CliResult<usize> {
    t.header.iter().position(|h| h == name).ok_or_else(|| CliError::SchemaMismatch {
        path: path.to_path_buf(),
        message: format!("missing column {name:?}"),
    })
}

fn load_run(dir: &Path, name: String) -> CliResult<Option<RunArtifacts>> {
    let summary = dir.join("summary.csv");
    let gar = dir.join("gar_summary.csv");
    if !summary.is_file() && !gar.is_file() {
        return Ok(None);
    }
    let mut values = BTreeMap::new();
    if summary.is_file() {
        let t = read_table(&summary)?;
        let (m, mae) = (column_index(&t, "model", &summary)?, column_index(&t, "mae", &summary)?);
        for r in &t.rows {
            values.insert(("mae".to_string(), r[m].clone()), r[mae].clone());
        }
        let class = dir.join("classification.csv");
        if class.is_file() {
            let t = read_table(&class)?;
            let m = column_index(&t, "model", &class)?;
            for col in ["within_ci", "below_ci", "above_ci"] {
                let c = column_index(&t, col, &class)?;
                for r in &t.rows {
                    values.insert((col.to_string(), r[m].clone()), r[c].clone());
                }
            }
        }
    }
    if gar.is_file() {
        let t = read_table(&gar)?;
        let m = column_index(&t, "model", &gar)?;
        let mode = column_index(&t, "mode", &gar)?;
        let h = column_index(&t, "horizon", &gar)?;
        let mae = column_index(&t, "mae", &gar)?;
        for r in &t.rows {
            values.insert((format!("pit_mae {} h={}", r[mode], r[h]), r[m].clone()), r[mae].clone());
        }
    }
    let result = dir.join("result.csv");
    let levels = if result.is_file() {
        let t = read_table(&result)?;
        let l = column_index(&t, "level", &result)?;
        let mut levels: Vec<String> = Vec::new();
        for r in &t.rows {
            if !levels.contains(&r[l]) {
                levels.push(r[l].clone());
            }
        }
        Some(levels)
    } else {
        None
    };
    Ok(Some(RunArtifacts {
        name,
        dir: dir.to_path_buf(),
        values,
        levels,
    }))
}

/// Collects run directories under `root` (sorted by name).
pub fn collect_runs(root: &Path) -> CliResult<Vec<RunArtifacts>> {
    let mut runs = Vec::new();
    if let Some(r) = load_run(root, ".".into())? {
        runs.push(r);
    }
    let entries = match std::fs::read_dir(root) {
        Ok(e) => e,
        Err(_) => return Err(CliError::MissingArtifacts(root.to_path_buf())),
    };
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    for d in dirs {
        let name = d.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        if let Some(r) = load_run(&d, name)? {
            runs.push(r);
        }
    }
    if runs.is_empty() {
        return Err(CliError::MissingArtifacts(root.to_path_buf()));
    }
    Ok(runs)
}

pub fn build_report(root: &Path) -> CliResult<Report> {
    let runs = collect_runs(root)?;
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in &runs {
        for k in r.values.keys() {
            if !keys.contains(k) {
                keys.push(k.clone());
            }
        }
    }
    keys.sort_by(|a, b| section_rank(&a.0).cmp(&section_rank(&b.0)).then(a.cmp(b)));
    let mut header = vec!["section".to_string(), "model".to_string()];
    header.extend(runs.iter().map(|r| r.name.clone()));
    let mut table = Table::new(header);
    for (section, model) in &keys {
        let mut row = vec![section.clone(), model.clone()];
        for r in &runs {
            row.push(
                r.values
                    .get(&(section.clone(), model.clone()))
                    .cloned()
                    .unwrap_or_else(|| "NA".into()),
            );
        }
        table.push(row);
    }
    let level_sets: Vec<&Vec<String>> = runs.iter().filter_map(|r| r.levels.as_ref()).collect();
    let conflicting_levels = level_sets.windows(2).any(|w| w[0] != w[1]);
    if conflicting_levels {
        let mut row = vec!["levels".to_string(), String::new()];
        for r in &runs {
            row.push(r.levels.as_ref().map_or_else(|| "NA".into(), |l| l.join(" ")));
        }
        table.push(row);
    }
    Ok(Report {
        runs,
        table,
        conflicting_levels,
    })
}

fn section_rank(s: &str) -> u8 {
    match s {
        "mae" => 0,
        "within_ci" => 1,
        "below_ci" => 2,
        "above_ci" => 3,
        _ => 4,
    }
}

/// Fixed-width rendering of the merged table.
pub fn render_text(report: &Report) -> String {
    let t = &report.table;
    let rows: Vec<&Vec<String>> = t.rows.iter().filter(|r| r[0] != "levels").collect();
    let mut widths: Vec<usize> = t.header.iter().map(String::len).collect();
    for r in &rows {
        for (w, c) in widths.iter_mut().zip(r.iter()) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |cells: &[String], out: &mut String| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&t.header, &mut out);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    line(&rule, &mut out);
    for r in &rows {
        line(r, &mut out);
    }
    if report.conflicting_levels {
        let _ = writeln!(out, "\nnote: runs use different quantile level sets");
        for r in &report.runs {
            if let Some(l) = &r.levels {
                let _ = writeln!(out, "  {}: {}", r.name, l.join(" "));
            }
        }
    }
    out
}

/// Writes `report.csv` and `report.txt` into `out`.
pub fn write_report(out: &Path, report: &Report) -> CliResult<Vec<PathBuf>> {
    let mut prov = Provenance::new("report");
    for r in &report.runs {
        prov.push("run", format!("{} = {}", r.name, r.dir.display()));
    }
    let csv = write_table(&out.join("report.csv"), &report.table, &prov)?;
    let txt = out.join("report.txt");
    write_atomic(&txt, render_text(report).as_bytes())?;
    Ok(vec![csv, txt])
}
