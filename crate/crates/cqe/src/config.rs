//! Run configuration files.
//!
//! Configs are TOML documents with a top-level `schema_version` and one table
//! per subcommand:
//!
//! ```toml
//! schema_version = 1
//!
//! [simulate]
//! dgp = "ar2_cauchy"        # ar2_cauchy | ar2_exog | ar1
//! n_train = 198
//! iterations = 100
//! models = ["qr", "qrf", "cqr_qr", "cqr_qrf"]
//!
//! [backtest]
//! data = "gdp_nfci.csv"
//! horizon = 1
//! mode = "nfci_plus_lag"
//! ```
//!
//! `--set key=value` overrides are applied to the parsed tree before
//! validation; a key without a table prefix refers to the subcommand's table.

use std::path::{Path, PathBuf};

use cqe_core::data::{fine_grid, reporting_levels, validate_levels};
use cqe_core::dgp::{DgpKind, DgpSpec, Noise};
use cqe_core::experiments::{exog_dimension, ExperimentConfig, ModelKind, WilsonPooling};
use cqe_core::gar::{BacktestConfig, PredictorMode};
use cqe_core::models::QrfConfig;
use toml::{Table, Value};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: i64 = 1;

/// Parses a config document and applies `key=value` overrides.
pub fn load_document(text: &str, overrides: &[String], section: &str) -> CliResult<Table> {
    let mut doc: Table = text
        .parse()
        .map_err(|e: toml::de::Error| CliError::config("<file>", e.message().to_string()))?;
    match doc.get("schema_version") {
        None => {}
        Some(Value::Integer(SCHEMA_VERSION)) => {}
        Some(v) => {
            return Err(CliError::config(
                "schema_version",
                format!("unsupported schema version {v}; expected {SCHEMA_VERSION}"),
            ))
        }
    }
    for o in overrides {
        apply_override(&mut doc, o, section)?;
    }
    Ok(doc)
}

pub fn read_document(path: Option<&Path>, overrides: &[String], section: &str) -> CliResult<Table> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| CliError::io(format!("reading config {}", p.display()), e))?,
        None => String::new(),
    };
    load_document(&text, overrides, section)
}

fn parse_scalar(raw: &str) -> Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.to_string())),
        Err(_) => Value::String(raw.to_string()),
    }
}

fn apply_override(doc: &mut Table, assignment: &str, section: &str) -> CliResult<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::config(assignment, "override must look like key=value"))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(CliError::config(assignment, "empty override key"));
    }
    let mut path: Vec<&str> = key.split('.').collect();
    if path.len() == 1 && key != "schema_version" {
        path.insert(0, section);
    }
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut table = doc;
    for p in parents {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| CliError::config(key, format!("`{p}` is not a table")))?;
    }
    table.insert(last.to_string(), parse_scalar(raw.trim()));
    Ok(())
}

/// Typed, key-checked view of one config table.
struct Section<'a> {
    name: String,
    table: Option<&'a Table>,
}

impl<'a> Section<'a> {
    fn new(doc: &'a Table, name: &str) -> CliResult<Self> {
        let table = match doc.get(name) {
            None => None,
            Some(Value::Table(t)) => Some(t),
            Some(_) => return Err(CliError::config(name, "expected a table")),
        };
        Ok(Self {
            name: name.to_string(),
            table,
        })
    }

    fn sub(&self, name: &str) -> CliResult<Section<'a>> {
        let key = self.key(name);
        let table = match self.table.and_then(|t| t.get(name)) {
            None => None,
            Some(Value::Table(t)) => Some(t),
            Some(_) => return Err(CliError::config(key, "expected a table")),
        };
        Ok(Section { name: key, table })
    }

    fn key(&self, k: &str) -> String {
        format!("{}.{}", self.name, k)
    }

    fn err(&self, k: &str, msg: impl Into<String>) -> CliError {
        CliError::config(self.key(k), msg)
    }

    fn check_keys(&self, allowed: &[&str]) -> CliResult<()> {
        if let Some(t) = self.table {
            if let Some(k) = t.keys().find(|k| !allowed.contains(&k.as_str())) {
                return Err(self.err(k, "unknown key"));
            }
        }
        Ok(())
    }

    fn get(&self, k: &str) -> Option<&'a Value> {
        self.table.and_then(|t| t.get(k))
    }

    fn usize_or(&self, k: &str, default: usize) -> CliResult<usize> {
        match self.get(k) {
            None => Ok(default),
            Some(Value::Integer(i)) if *i >= 0 => Ok(*i as usize),
            Some(v) => Err(self.err(k, format!("expected a non-negative integer, got {v}"))),
        }
    }

    fn opt_usize(&self, k: &str) -> CliResult<Option<usize>> {
        match self.get(k) {
            None => Ok(None),
            Some(_) => self.usize_or(k, 0).map(Some),
        }
    }

    fn u64_or(&self, k: &str, default: u64) -> CliResult<u64> {
        match self.get(k) {
            None => Ok(default),
            Some(Value::Integer(i)) if *i >= 0 => Ok(*i as u64),
            Some(v) => Err(self.err(k, format!("expected a non-negative integer, got {v}"))),
        }
    }

    fn f64_opt(&self, k: &str) -> CliResult<Option<f64>> {
        match self.get(k) {
            None => Ok(None),
            Some(Value::Float(f)) => Ok(Some(*f)),
            Some(Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(v) => Err(self.err(k, format!("expected a number, got {v}"))),
        }
    }

    fn bool_or(&self, k: &str, default: bool) -> CliResult<bool> {
        match self.get(k) {
            None => Ok(default),
            Some(Value::Boolean(b)) => Ok(*b),
            Some(v) => Err(self.err(k, format!("expected true or false, got {v}"))),
        }
    }

    fn str_opt(&self, k: &str) -> CliResult<Option<&'a str>> {
        match self.get(k) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.as_str())),
            Some(v) => Err(self.err(k, format!("expected a string, got {v}"))),
        }
    }

    fn f64_list(&self, k: &str) -> CliResult<Option<Vec<f64>>> {
        match self.get(k) {
            None => Ok(None),
            Some(Value::Array(a)) => a
                .iter()
                .map(|v| match v {
                    Value::Float(f) => Ok(*f),
                    Value::Integer(i) => Ok(*i as f64),
                    other => Err(self.err(k, format!("expected numbers, got {other}"))),
                })
                .collect::<CliResult<Vec<_>>>()
                .map(Some),
            Some(Value::Float(f)) => Ok(Some(vec![*f])),
            Some(v) => Err(self.err(k, format!("expected an array of numbers, got {v}"))),
        }
    }

    fn str_list(&self, k: &str) -> CliResult<Option<Vec<&'a str>>> {
        match self.get(k) {
            None => Ok(None),
            Some(Value::Array(a)) => a
                .iter()
                .map(|v| {
                    v.as_str()
                        .ok_or_else(|| self.err(k, format!("expected strings, got {v}")))
                })
                .collect::<CliResult<Vec<_>>>()
                .map(Some),
            Some(Value::String(s)) => Ok(Some(s.split(',').map(str::trim).collect())),
            Some(v) => Err(self.err(k, format!("expected an array of strings, got {v}"))),
        }
    }

    fn levels(&self, k: &str, default: Vec<f64>) -> CliResult<Vec<f64>> {
        let levels = self.f64_list(k)?.unwrap_or(default);
        validate_levels(&levels).map_err(|e| self.err(k, e.to_string()))?;
        Ok(levels)
    }

    fn models(&self, k: &str) -> CliResult<Vec<ModelKind>> {
        match self.str_list(k)? {
            None => Ok(ModelKind::ALL.to_vec()),
            Some(names) => {
                let mut out = Vec::new();
                for n in names {
                    let m = ModelKind::parse(n)
                        .ok_or_else(|| self.err(k, format!("unknown model {n:?}")))?;
                    if out.contains(&m) {
                        return Err(self.err(k, format!("duplicate model {n:?}")));
                    }
                    out.push(m);
                }
                if out.is_empty() {
                    return Err(self.err(k, "at least one model is required"));
                }
                Ok(out)
            }
        }
    }

    fn qrf(&self, seed: u64) -> CliResult<QrfConfig> {
        let q = self.sub("qrf")?;
        q.check_keys(&["n_trees", "min_leaf", "mtry", "bootstrap"])?;
        let d = QrfConfig::default();
        let cfg = QrfConfig {
            n_trees: q.usize_or("n_trees", d.n_trees)?,
            min_leaf: q.usize_or("min_leaf", d.min_leaf)?,
            mtry: q.opt_usize("mtry")?,
            bootstrap: q.bool_or("bootstrap", d.bootstrap)?,
            seed,
        };
        if cfg.n_trees == 0 {
            return Err(q.err("n_trees", "must be positive"));
        }
        if cfg.min_leaf == 0 {
            return Err(q.err("min_leaf", "must be positive"));
        }
        if cfg.mtry == Some(0) {
            return Err(q.err("mtry", "must be positive"));
        }
        Ok(cfg)
    }
}

fn map_core(section: &str, e: cqe_core::Error) -> CliError {
    match e {
        cqe_core::Error::InvalidParameter { name, reason } => {
            CliError::config(format!("{section}.{name}"), reason)
        }
        cqe_core::Error::InvalidLevel(l) => {
            CliError::config(format!("{section}.levels"), format!("invalid level {l}"))
        }
        other => CliError::config(section, other.to_string()),
    }
}

/// Builds a simulation config from the `[simulate]` table.
pub fn simulate_config(doc: &Table, seed_override: Option<u64>) -> CliResult<ExperimentConfig> {
    let s = Section::new(doc, "simulate")?;
    s.check_keys(&[
        "dgp", "noise", "phi", "p", "exog_ratio", "burn_in", "n_train", "n_test", "iterations",
        "levels", "models", "n_lags", "seed", "wilson", "qrf",
    ])?;
    let seed = match seed_override {
        Some(v) => v,
        None => s.u64_or("seed", 0)?,
    };
    let n_train = s.usize_or("n_train", 198)?;
    let kind = match s.str_opt("dgp")?.unwrap_or("ar2_cauchy") {
        "ar2_cauchy" => DgpKind::Ar2Cauchy,
        "ar2_exog" => DgpKind::Ar2Exog,
        "ar1" | "ar1_root" => DgpKind::Ar1Root,
        other => return Err(s.err("dgp", format!("unknown process {other:?}"))),
    };
    let noise = match s.str_opt("noise")? {
        None => None,
        Some("cauchy") => Some(Noise::Cauchy),
        Some("student_t2") | Some("t2") => Some(Noise::StudentT2),
        Some("normal") => Some(Noise::Normal),
        Some(other) => return Err(s.err("noise", format!("unknown noise {other:?}"))),
    };
    let mut dgp = match kind {
        DgpKind::Ar2Cauchy => {
            if s.get("p").is_some() || s.get("exog_ratio").is_some() {
                return Err(s.err("p", "only valid for dgp = \"ar2_exog\""));
            }
            DgpSpec::ar2_cauchy(0)
        }
        DgpKind::Ar2Exog => {
            let p = match (s.opt_usize("p")?, s.f64_opt("exog_ratio")?) {
                (Some(_), Some(_)) => return Err(s.err("p", "set either p or exog_ratio, not both")),
                (Some(p), None) => p,
                (None, Some(r)) if r > 0.0 => exog_dimension(n_train, r),
                (None, Some(_)) => return Err(s.err("exog_ratio", "must be positive")),
                (None, None) => return Err(s.err("p", "required for dgp = \"ar2_exog\"")),
            };
            DgpSpec::ar2_exog(p, noise.unwrap_or(Noise::StudentT2), 0)
        }
        DgpKind::Ar1Root => {
            let phi = match s.f64_list("phi")? {
                None => 0.95,
                Some(v) if v.len() == 1 => v[0],
                Some(_) => return Err(s.err("phi", "ar1 takes a single coefficient")),
            };
            DgpSpec::ar1(phi, 0)
        }
    };
    if kind != DgpKind::Ar1Root {
        if let Some(phi) = s.f64_list("phi")? {
            dgp.phi = phi;
        }
    }
    if let Some(n) = noise {
        dgp.noise = n;
    }
    dgp.burn_in = s.usize_or("burn_in", dgp.burn_in)?;
    dgp.validate().map_err(|e| map_core("simulate", e))?;

    let mut cfg = ExperimentConfig::new(dgp, n_train);
    cfg.n_test = s.usize_or("n_test", cfg.n_test)?;
    cfg.iterations = s.usize_or("iterations", cfg.iterations)?;
    cfg.levels = s.levels("levels", reporting_levels())?;
    cfg.models = s.models("models")?;
    cfg.n_lags = s.usize_or("n_lags", cfg.n_lags)?;
    cfg.master_seed = seed;
    cfg.qrf = s.qrf(0)?;
    cfg.wilson = match s.str_opt("wilson")?.unwrap_or("pooled") {
        "pooled" => WilsonPooling::Pooled,
        "per_iteration" => WilsonPooling::PerIteration,
        other => return Err(s.err("wilson", format!("unknown pooling {other:?}"))),
    };
    if cfg.n_lags == 0 {
        return Err(s.err("n_lags", "must be at least 1"));
    }
    cfg.validate().map_err(|e| map_core("simulate", e))?;
    Ok(cfg)
}

/// Column layout of a macro CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroSchema {
    pub date: String,
    pub gdp: String,
    pub nfci: Option<String>,
    /// Explicit component columns.
    pub components: Vec<String>,
    /// Every column starting with this prefix is a component.
    pub component_prefix: Option<String>,
}

impl Default for MacroSchema {
    fn default() -> Self {
        Self {
            date: "date".into(),
            gdp: "gdp".into(),
            nfci: Some("nfci".into()),
            components: Vec::new(),
            component_prefix: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestSettings {
    pub data: PathBuf,
    pub schema: MacroSchema,
    /// One backtest per (mode, horizon) pair.
    pub configs: Vec<BacktestConfig>,
}

impl BacktestSettings {
    pub fn modes(&self) -> Vec<PredictorMode> {
        let mut m: Vec<PredictorMode> = self.configs.iter().map(|c| c.mode).collect();
        m.sort();
        m.dedup();
        m
    }
}

/// Builds backtest configs from the `[backtest]` table. `horizon` and `mode`
/// accept a single value or a list; every combination is run. Relative data
/// paths are resolved against `base_dir`.
pub fn backtest_config(
    doc: &Table,
    seed_override: Option<u64>,
    base_dir: Option<&Path>,
) -> CliResult<BacktestSettings> {
    let s = Section::new(doc, "backtest")?;
    s.check_keys(&[
        "data", "date_column", "gdp_column", "nfci_column", "component_columns", "component_prefix",
        "horizon", "mode", "pca_variance", "quantile_grid", "curve_levels", "min_train", "models",
        "seed", "qrf",
    ])?;
    let data = s
        .str_opt("data")?
        .ok_or_else(|| s.err("data", "path to the input CSV is required"))?;
    let mut data = PathBuf::from(data);
    if data.is_relative() {
        if let Some(b) = base_dir {
            data = b.join(data);
        }
    }
    let modes = s
        .str_list("mode")?
        .unwrap_or_else(|| vec!["nfci_plus_lag"])
        .into_iter()
        .map(|m| PredictorMode::parse(m).ok_or_else(|| s.err("mode", format!("unknown mode {m:?}"))))
        .collect::<CliResult<Vec<_>>>()?;
    if modes.is_empty() {
        return Err(s.err("mode", "at least one mode is required"));
    }
    let horizons: Vec<usize> = match s.get("horizon") {
        None => vec![1],
        Some(Value::Array(a)) => a
            .iter()
            .map(|v| match v {
                Value::Integer(i) if *i >= 1 => Ok(*i as usize),
                other => Err(s.err("horizon", format!("must be a positive integer, got {other}"))),
            })
            .collect::<CliResult<_>>()?,
        Some(Value::Integer(i)) if *i >= 1 => vec![*i as usize],
        Some(v) => return Err(s.err("horizon", format!("must be a positive integer, got {v}"))),
    };
    if horizons.is_empty() {
        return Err(s.err("horizon", "at least one horizon is required"));
    }
    let seed = match seed_override {
        Some(v) => v,
        None => s.u64_or("seed", 0)?,
    };
    let d = MacroSchema::default();
    let schema = MacroSchema {
        date: s.str_opt("date_column")?.unwrap_or(&d.date).to_string(),
        gdp: s.str_opt("gdp_column")?.unwrap_or(&d.gdp).to_string(),
        nfci: Some(s.str_opt("nfci_column")?.unwrap_or("nfci").to_string()),
        components: s
            .str_list("component_columns")?
            .unwrap_or_default()
            .into_iter()
            .map(String::from)
            .collect(),
        component_prefix: s.str_opt("component_prefix")?.map(String::from),
    };
    let pca_variance = s.f64_opt("pca_variance")?;
    let quantile_grid = s.levels("quantile_grid", fine_grid())?;
    let curve_levels = s.levels("curve_levels", reporting_levels())?;
    let models = s.models("models")?;
    let qrf = s.qrf(0)?;
    let mut configs = Vec::new();
    for &mode in &modes {
        for &h in &horizons {
            let mut cfg = BacktestConfig::new(h, mode);
            if let Some(v) = pca_variance {
                cfg.pca_variance = v;
            }
            cfg.quantile_grid = quantile_grid.clone();
            cfg.curve_levels = curve_levels.clone();
            cfg.min_train = s.usize_or("min_train", cfg.min_train)?;
            cfg.models = models.clone();
            cfg.qrf = qrf;
            cfg.seed = seed;
            cfg.validate().map_err(|e| map_core("backtest", e))?;
            configs.push(cfg);
        }
    }
    Ok(BacktestSettings {
        data,
        schema,
        configs,
    })
}
