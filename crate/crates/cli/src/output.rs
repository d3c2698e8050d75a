use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde_json::{Map, Value};

use qhist_core::hilbert::C64;

use crate::config::Common;
use crate::error::CliError;

pub const RNG_NAME: &str = "ChaCha8";
pub const SUMMARY_FILE: &str = "summary.json";

/// Float cell: shortest round-trip scientific form.
pub fn num(x: f64) -> String {
    format!("{x:e}")
}

pub fn int(x: usize) -> String {
    x.to_string()
}

pub fn list(xs: &[f64]) -> String {
    xs.iter().map(|x| num(*x)).collect::<Vec<_>>().join(";")
}

pub fn complex(z: C64) -> [String; 2] {
    [num(z.re), num(z.im)]
}

/// Comma-separated table with a `# key = value` metadata header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub meta: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            meta: Vec::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width in {}", self.name);
        self.rows.push(row);
    }

    pub fn meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn render(&self, header: &[(String, String)]) -> String {
        let mut out = String::new();
        for (k, v) in header.iter().chain(&self.meta) {
            let _ = writeln!(out, "# {k} = {v}");
        }
        let _ = writeln!(out, "{}", self.columns.join(","));
        for r in &self.rows {
            let _ = writeln!(out, "{}", r.join(","));
        }
        out
    }
}

/// Everything a run produces, held in memory until written.
#[derive(Debug, Clone, Default)]
pub struct Report {
    /// Tolerances and truncation dimensions shared by all tables of the run.
    pub meta: Vec<(String, String)>,
    pub tables: Vec<Table>,
    pub summary: Map<String, Value>,
}

impl Report {
    pub fn meta(&mut self, key: &str, value: impl ToString) {
        self.meta.push((key.to_string(), value.to_string()));
    }

    pub fn set(&mut self, key: &str, value: impl Into<Value>) {
        self.summary.insert(key.to_string(), value.into());
    }

    pub fn header(&self, common: &Common) -> Vec<(String, String)> {
        let mut h = vec![
            ("tool".to_string(), format!("qhist {}", env!("CARGO_PKG_VERSION"))),
            ("kind".to_string(), common.kind.clone()),
            ("config_sha256".to_string(), common.config_hash.clone()),
            ("seed".to_string(), common.seed.map_or("none".to_string(), |s| s.to_string())),
            ("rng".to_string(), RNG_NAME.to_string()),
        ];
        h.extend(self.meta.iter().cloned());
        h
    }

    /// File name and contents of every output, summary last.
    pub fn render(&self, common: &Common) -> Result<Vec<(String, String)>, CliError> {
        let header = self.header(common);
        let mut files: Vec<(String, String)> =
            self.tables.iter().map(|t| (format!("{}.csv", t.name), t.render(&header))).collect();
        let mut meta = Map::new();
        for (k, v) in &header {
            meta.insert(k.clone(), Value::String(v.clone()));
        }
        let mut top = Map::new();
        top.insert("metadata".into(), Value::Object(meta));
        top.insert("results".into(), Value::Object(self.summary.clone()));
        top.insert(
            "tables".into(),
            Value::Array(self.tables.iter().map(|t| Value::String(format!("{}.csv", t.name))).collect()),
        );
        let json = serde_json::to_string_pretty(&Value::Object(top)).map_err(|e| CliError::Runtime(e.to_string()))?;
        files.push((SUMMARY_FILE.to_string(), json + "\n"));
        Ok(files)
    }
}

/// JSON number, or null when not finite.
pub fn jnum(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

/// Writes all files into a scratch directory beside `dir`, then moves them in.
pub fn write_all(dir: &Path, files: &[(String, String)]) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    let scratch = tempfile::Builder::new().prefix(".qhist-").tempdir_in(dir)?;
    for (name, body) in files {
        fs::write(scratch.path().join(name), body)?;
    }
    for (name, _) in files {
        fs::rename(scratch.path().join(name), dir.join(name))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_layout() {
        let mut t = Table::new("x", &["a", "b"]).meta("tol", 1e-9);
        t.push(vec![int(1), num(0.25)]);
        let s = t.render(&[("kind".into(), "berry".into())]);
        assert_eq!(s, "# kind = berry\n# tol = 0.000000001\na,b\n1,2.5e-1\n");
    }

    #[test]
    fn non_finite_json_is_null() {
        assert_eq!(jnum(f64::NAN), Value::Null);
        assert_eq!(jnum(0.5), serde_json::json!(0.5));
    }
}
