//! Tables, provenance headers and the CSV/JSON writers.
//!
//! Floats are written in Rust's shortest round-trip form, so identical runs
//! give identical bytes. The only run-dependent line is the timestamp, which
//! `Provenance::timestamp = None` drops.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value as Json};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    F(f64),
    U(u64),
    B(bool),
    S(String),
}

impl Cell {
    fn text(&self) -> String {
        match self {
            Cell::F(v) => format!("{v:?}"),
            Cell::U(v) => v.to_string(),
            Cell::B(v) => v.to_string(),
            Cell::S(v) => v.clone(),
        }
    }

    fn json(&self) -> Json {
        match self {
            Cell::F(v) if v.is_finite() => json!(v),
            Cell::F(v) => json!(format!("{v:?}")),
            Cell::U(v) => json!(v),
            Cell::B(v) => json!(v),
            Cell::S(v) => json!(v),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::U(v as u64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::U(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::B(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::S(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::S(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: Vec<String>) -> Self {
        Table {
            name: name.to_string(),
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width in table {}", self.name);
        self.rows.push(row);
    }

    /// Index of a column by name.
    pub fn col(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Numeric value at `(row, column)`, if present and numeric.
    pub fn f64_at(&self, row: usize, name: &str) -> Option<f64> {
        match self.rows.get(row)?.get(self.col(name)?)? {
            Cell::F(v) => Some(*v),
            Cell::U(v) => Some(*v as f64),
            _ => None,
        }
    }
}

/// Result of one command: scalar summary plus tables.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub command: String,
    pub summary: Vec<(String, Cell)>,
    pub tables: Vec<Table>,
    /// `Some(false)` when the command ran built-in checks and one failed.
    pub passed: Option<bool>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        Report {
            command: command.to_string(),
            summary: Vec::new(),
            tables: Vec::new(),
            passed: None,
        }
    }

    pub fn note(&mut self, key: &str, value: impl Into<Cell>) {
        self.summary.push((key.to_string(), value.into()));
    }

    pub fn get(&self, key: &str) -> Option<&Cell> {
        self.summary.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        match self.get(key)? {
            Cell::F(v) => Some(*v),
            Cell::U(v) => Some(*v as f64),
            _ => None,
        }
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// `key: value` lines for the terminal.
    pub fn summary_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.summary {
            s.push_str(&format!("{k}: {}\n", v.text()));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub quad_order: Option<usize>,
    /// Seconds since the Unix epoch; `None` suppresses the line.
    pub timestamp: Option<u64>,
}

impl Provenance {
    fn lines(&self) -> Vec<(String, String)> {
        let mut v = vec![
            ("tool".to_string(), format!("mattis {}", self.version)),
            ("command".to_string(), self.command.clone()),
            ("config_sha256".to_string(), self.config_hash.clone()),
            (
                "seeds".to_string(),
                self.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(" "),
            ),
            (
                "quad_order".to_string(),
                self.quad_order.map_or_else(|| "default".to_string(), |q| q.to_string()),
            ),
        ];
        if let Some(t) = self.timestamp {
            v.push(("generated_unix".to_string(), t.to_string()));
        }
        v
    }

    fn json(&self) -> Json {
        let mut m = Map::new();
        m.insert("tool".into(), json!("mattis"));
        m.insert("version".into(), json!(self.version));
        m.insert("command".into(), json!(self.command));
        m.insert("config_sha256".into(), json!(self.config_hash));
        m.insert("seeds".into(), json!(self.seeds));
        m.insert("quad_order".into(), json!(self.quad_order));
        if let Some(t) = self.timestamp {
            m.insert("generated_unix".into(), json!(t));
        }
        Json::Object(m)
    }
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn write_header(w: &mut impl Write, prov: &Provenance, path: &Path) -> CliResult<()> {
    for (k, v) in prov.lines() {
        writeln!(w, "# {k}: {v}").map_err(|e| CliError::io(path, e))?;
    }
    Ok(())
}

fn write_csv_table(path: &Path, prov: &Provenance, columns: &[String], rows: &[Vec<String>]) -> CliResult<()> {
    let mut w = create(path)?;
    write_header(&mut w, prov, path)?;
    let mut csv = csv::Writer::from_writer(w);
    let wrap = |e: csv::Error| CliError::io(path, std::io::Error::other(e));
    csv.write_record(columns).map_err(wrap)?;
    for r in rows {
        csv.write_record(r).map_err(wrap)?;
    }
    csv.flush().map_err(|e| CliError::io(path, e))
}

/// Writes the report into `dir` and returns the files written.
///
/// CSV: `summary.csv` plus one `<table>.csv` per table, each opening with
/// `# key: value` provenance lines. JSON: one `<command>.json`.
pub fn write_report(report: &Report, prov: &Provenance, dir: &Path, format: Format) -> CliResult<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut written = Vec::new();
    match format {
        Format::Csv => {
            let path = dir.join("summary.csv");
            let rows: Vec<Vec<String>> = report
                .summary
                .iter()
                .map(|(k, v)| vec![k.clone(), v.text()])
                .collect();
            write_csv_table(&path, prov, &["key".to_string(), "value".to_string()], &rows)?;
            written.push(path);
            for t in &report.tables {
                let path = dir.join(format!("{}.csv", t.name));
                let rows: Vec<Vec<String>> = t.rows.iter().map(|r| r.iter().map(Cell::text).collect()).collect();
                write_csv_table(&path, prov, &t.columns, &rows)?;
                written.push(path);
            }
        }
        Format::Json => {
            let path = dir.join(format!("{}.json", report.command));
            let summary: Map<String, Json> = report.summary.iter().map(|(k, v)| (k.clone(), v.json())).collect();
            let tables: Map<String, Json> = report
                .tables
                .iter()
                .map(|t| {
                    let rows: Vec<Json> = t
                        .rows
                        .iter()
                        .map(|r| Json::Array(r.iter().map(Cell::json).collect()))
                        .collect();
                    (t.name.clone(), json!({ "columns": t.columns, "rows": rows }))
                })
                .collect();
            let doc = json!({
                "provenance": prov.json(),
                "summary": summary,
                "tables": tables,
                "passed": report.passed,
            });
            let mut w = create(&path)?;
            serde_json::to_writer_pretty(&mut w, &doc).map_err(|e| CliError::io(&path, e.into()))?;
            writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::io(&path, e))?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Column labels `{prefix}_{i}` with 1-based indices.
pub fn vector_columns(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}_{i}")).collect()
}

/// Column labels `{prefix}_{ab}` for the upper triangle of a D×D matrix.
pub fn matrix_columns(prefix: &str, d: usize) -> Vec<String> {
    let mut v = Vec::new();
    for a in 1..=d {
        for b in a..=d {
            v.push(format!("{prefix}_{a}_{b}"));
        }
    }
    v
}

pub fn cells(v: &[f64]) -> impl Iterator<Item = Cell> + '_ {
    v.iter().map(|&x| Cell::F(x))
}
