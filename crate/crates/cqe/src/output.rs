//! CSV artifacts: provenance header, `NA` for missing values, atomic writes.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{CliError, CliResult};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// `# key: value` lines written above the header row.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Provenance {
    entries: Vec<(String, String)>,
}

impl Provenance {
    pub fn new(command: &str) -> Self {
        let mut p = Self::default();
        p.push("tool", format!("cqe {TOOL_VERSION}"));
        p.push("command", command);
        p
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Self {
        self.entries.push((key.into(), value.to_string().replace('\n', " ")));
        self
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }
}

/// Formats a float for CSV output; non-finite values become `NA`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        let s = format!("{v:.6}");
        if s == "-0.000000" {
            "0.000000".into()
        } else {
            s
        }
    } else {
        "NA".into()
    }
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), fmt_f64)
}

/// In-memory CSV table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_bytes(&self, provenance: &Provenance) -> CliResult<Vec<u8>> {
        let mut out = Vec::new();
        for (k, v) in provenance.entries() {
            writeln!(out, "# {k}: {v}").expect("write to Vec");
        }
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        let wrap = |e| CliError::Internal(format!("csv encoding: {e}"));
        w.write_record(&self.header).map_err(wrap)?;
        for r in &self.rows {
            w.write_record(r).map_err(wrap)?;
        }
        w.into_inner().map_err(|e| CliError::Internal(format!("csv encoding: {e}")))
    }
}

/// Writes `bytes` to `path` via a temporary file in the same directory and a
/// rename, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .map_err(|e| CliError::io(format!("creating temporary file in {}", dir.display()), e))?;
    tmp.write_all(bytes)
        .and_then(|_| tmp.as_file().sync_all())
        .map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
    tmp.persist(path)
        .map_err(|e| CliError::io(format!("renaming into {}", path.display()), e.error))?;
    Ok(())
}

pub fn write_table(path: &Path, table: &Table, provenance: &Provenance) -> CliResult<PathBuf> {
    write_atomic(path, &table.to_bytes(provenance)?)?;
    log::info!("wrote {}", path.display());
    Ok(path.to_path_buf())
}

/// Reads a CSV written by [`write_table`] (provenance lines are skipped).
pub fn read_table(path: &Path) -> CliResult<Table> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| CliError::Csv {
            path: path.to_path_buf(),
            source: e,
        })?;
    let header = r
        .headers()
        .map_err(|e| CliError::Csv {
            path: path.to_path_buf(),
            source: e,
        })?
        .iter()
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| CliError::Csv {
            path: path.to_path_buf(),
            source: e,
        })?;
        rows.push(rec.iter().map(String::from).collect());
    }
    Ok(Table { header, rows })
}

/// Provenance lines of a CSV written by [`write_table`].
pub fn read_provenance(path: &Path) -> CliResult<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    Ok(text
        .lines()
        .map_while(|l| l.strip_prefix("# "))
        .filter_map(|l| l.split_once(": "))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect())
}
