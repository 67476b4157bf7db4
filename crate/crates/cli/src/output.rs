//! Rendering of command results. Every command produces a [`Table`] and, optionally, a
//! richer JSON document; CSV is always the table so both formats carry the same numbers.

use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use anyhow::{Context, Result};
use clap::ValueEnum;
use serde::Serialize;
use serde_json::{Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

/// One table cell. Floats are printed in shortest round-trip form.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Int(u64),
    Float(f64),
}

impl Cell {
    fn to_csv(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format_float(*v),
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Cell::Text(s) => Value::String(s.clone()),
            Cell::Int(v) => Value::from(*v),
            // non-finite values become null
            Cell::Float(v) => serde_json::Number::from_f64(*v).map_or(Value::Null, Value::Number),
        }
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

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        // `{:?}` is the shortest round-trip form and keeps a trailing `.0` on integers
        format!("{v:?}")
    }
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::to_csv))?;
        }
        Ok(w.into_inner().context("flushing CSV")?)
    }

    /// Rows as JSON objects keyed by the header.
    pub fn to_json(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|row| {
                    let obj: Map<String, Value> =
                        self.header.iter().cloned().zip(row.iter().map(Cell::to_json)).collect();
                    Value::Object(obj)
                })
                .collect(),
        )
    }
}

/// Result of a command.
pub struct Output {
    pub table: Table,
    /// JSON document to emit instead of the table rows, when richer than the table.
    pub json: Option<Value>,
    /// Error to report after the partial result has been written.
    pub failure: Option<anyhow::Error>,
}

impl Output {
    pub fn table(table: Table) -> Self {
        Self { table, json: None, failure: None }
    }

    pub fn render(&self, format: Format) -> Result<Vec<u8>> {
        match format {
            Format::Csv => self.table.to_csv(),
            Format::Json => {
                let doc = self.json.clone().unwrap_or_else(|| self.table.to_json());
                let mut bytes = serde_json::to_vec_pretty(&doc)?;
                bytes.push(b'\n');
                Ok(bytes)
            }
        }
    }
}

pub fn write_output(bytes: &[u8], out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            let mut f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            f.write_all(bytes)?;
            f.flush()?;
        }
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, 2868.0, 7.896_573_434_529_548e-5, -0.0, 1e300] {
            let s = format_float(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
        assert_eq!(format_float(2.0), "2.0");
        assert_eq!(format_float(f64::NAN), "NaN");
    }

    #[test]
    fn csv_and_json_agree() {
        let mut t = Table::new(["name", "value"]);
        t.push(vec!["a".into(), 0.1.into()]);
        t.push(vec!["b".into(), 3u64.into()]);
        let csv = String::from_utf8(t.to_csv().unwrap()).unwrap();
        assert_eq!(csv, "name,value\na,0.1\nb,3\n");
        let json = t.to_json();
        assert_eq!(json[0]["value"].as_f64(), Some(0.1));
        assert_eq!(json[1]["name"], "b");
    }
}
