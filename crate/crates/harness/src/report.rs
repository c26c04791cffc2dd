//! Report tables and their text renderings.

use std::fmt::Write as _;
use std::path::Path;

use serde_json::{Map, Value};

use crate::config::ExperimentConfig;
use crate::HarnessError;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Float(x) => x.to_string(),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Float(x) if x.is_finite() => serde_json::json!(x),
            Cell::Float(x) => Value::String(x.to_string()),
            Cell::Int(i) => serde_json::json!(i),
            Cell::Text(s) => Value::String(s.clone()),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<u32> for Cell {
    fn from(x: u32) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&'static str]) -> Self {
        Self { name: name.to_string(), columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width for table {}", self.name);
        self.rows.push(row);
    }

    /// Column lookup by name, for tests and summaries.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| *c == name)
    }

    pub fn float(&self, row: usize, column: &str) -> Option<f64> {
        match self.rows.get(row)?.get(self.column(column)?)? {
            Cell::Float(x) => Some(*x),
            Cell::Int(i) => Some(*i as f64),
            Cell::Text(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Table,
    JsonLines,
}

impl Format {
    pub fn extension(&self) -> &'static str {
        match self {
            Format::Table => "tsv",
            Format::JsonLines => "jsonl",
        }
    }
}

/// Output of one command: tables plus the config and seed that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub command: &'static str,
    pub config: ExperimentConfig,
    pub tables: Vec<Table>,
    /// Raw artifacts written verbatim next to the tables (record, spectrum, P curve).
    pub artifacts: Vec<(String, String)>,
}

impl Report {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    fn header(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# hamid {} config_sha256={} seed={}",
            self.command,
            self.config.sha256(),
            self.config.seed
        );
        for line in self.config.to_toml().lines() {
            let _ = writeln!(out, "# {line}");
        }
        out
    }

    pub fn render_table(&self, table: &Table, format: Format) -> String {
        let mut out = String::new();
        match format {
            Format::Table => {
                out.push_str(&self.header());
                out.push_str(&table.columns.join("\t"));
                out.push('\n');
                for row in &table.rows {
                    let cells: Vec<String> = row.iter().map(Cell::render).collect();
                    out.push_str(&cells.join("\t"));
                    out.push('\n');
                }
            }
            Format::JsonLines => {
                let meta = serde_json::json!({
                    "command": self.command,
                    "table": table.name,
                    "config_sha256": self.config.sha256(),
                    "seed": self.config.seed,
                    "config": self.config,
                });
                let _ = writeln!(out, "{meta}");
                for row in &table.rows {
                    let mut obj = Map::new();
                    obj.insert("table".into(), Value::String(table.name.clone()));
                    for (col, cell) in table.columns.iter().zip(row) {
                        obj.insert((*col).to_string(), cell.json());
                    }
                    let _ = writeln!(out, "{}", Value::Object(obj));
                }
            }
        }
        out
    }

    /// All tables concatenated, separated by blank lines.
    pub fn render(&self, format: Format) -> String {
        let mut out = String::new();
        for (i, table) in self.tables.iter().enumerate() {
            if i > 0 && format == Format::Table {
                out.push('\n');
            }
            if format == Format::Table {
                let _ = writeln!(out, "# table {}", table.name);
            }
            out.push_str(&self.render_table(table, format));
        }
        out
    }

    /// One file per table plus the raw artifacts.
    pub fn write_dir(&self, dir: &Path, format: Format) -> Result<(), HarnessError> {
        std::fs::create_dir_all(dir)?;
        for table in &self.tables {
            let path = dir.join(format!("{}.{}", table.name, format.extension()));
            std::fs::write(path, self.render_table(table, format))?;
        }
        for (name, body) in &self.artifacts {
            std::fs::write(dir.join(name), body)?;
        }
        Ok(())
    }
}

/// Equal-width histogram as `(lower edge, upper edge, count)` rows.
pub fn histogram(name: &str, values: &[f64], bins: usize) -> Table {
    let mut table = Table::new(name, &["bin_lower", "bin_upper", "count"]);
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() || bins == 0 {
        return table;
    }
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        hi = lo + 1.0;
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    for v in finite {
        let idx = (((v - lo) / width) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    for (i, c) in counts.into_iter().enumerate() {
        table.push(vec![
            (lo + i as f64 * width).into(),
            (lo + (i + 1) as f64 * width).into(),
            c.into(),
        ]);
    }
    table
}
