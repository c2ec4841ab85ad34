//! CSV tables and the JSON summary written for each run.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::CliError;

/// A numeric table; header names carry units.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Table {
            name: name.to_string(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn with_header(name: &str, header: Vec<String>) -> Self {
        Table {
            name: name.to_string(),
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| CliError::Io(std::io::Error::other(e));
        w.write_record(&self.header).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| v.to_string())).map_err(io)?;
        }
        w.into_inner().map_err(|e| CliError::Io(std::io::Error::other(e.to_string())))
    }
}

/// Tables and scalar results of one scenario.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outputs {
    pub tables: Vec<Table>,
    pub summary: BTreeMap<String, Value>,
}

impl Outputs {
    pub fn table(&mut self, t: Table) {
        self.tables.push(t);
    }

    pub fn put(&mut self, key: &str, value: impl Into<Value>) {
        self.summary.insert(key.to_string(), value.into());
    }

    /// Scalar that may be NaN; stored as `null` then.
    pub fn put_f64(&mut self, key: &str, value: f64) {
        self.put(key, finite_or_null(value));
    }
}

pub fn finite_or_null(v: f64) -> Value {
    serde_json::Number::from_f64(v).map(Value::Number).unwrap_or(Value::Null)
}

/// Writes `<scenario>_<table>.csv` for every table and one `summary.json`
/// keyed by scenario. Returns the written paths in order.
pub fn write_outputs(dir: &Path, runs: &[(String, Outputs)]) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut summary = BTreeMap::new();
    for (scenario, out) in runs {
        for t in &out.tables {
            let path = dir.join(format!("{}_{}.csv", scenario, t.name));
            fs::write(&path, t.to_csv()?)?;
            written.push(path);
        }
        summary.insert(scenario.clone(), Value::Object(out.summary.clone().into_iter().collect()));
    }
    let path = dir.join("summary.json");
    let mut text = serde_json::to_string_pretty(&summary).map_err(|e| CliError::Io(std::io::Error::other(e)))?;
    text.push('\n');
    fs::write(&path, text)?;
    written.push(path);
    Ok(written)
}
