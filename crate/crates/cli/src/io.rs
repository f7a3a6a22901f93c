//! Table reading and writing.
//!
//! Tables are written either as CSV or as JSON `{"columns": [...], "rows": [[...]]}`.
//! CSV floats carry 17 significant digits; JSON floats use the shortest
//! representation that parses back to the same value.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Float(f64),
    Int(i64),
    Bool(bool),
    Empty,
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

impl From<u8> for Cell {
    fn from(x: u8) -> Self {
        Cell::Int(i64::from(x))
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Bool(x)
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(x: Option<T>) -> Self {
        x.map_or(Cell::Empty, Into::into)
    }
}

/// 17 significant digits.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

impl Cell {
    fn to_csv(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Float(x) => format_float(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Bool(b) => b.to_string(),
            Cell::Empty => String::new(),
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Cell::Text(s) => Value::String(s.clone()),
            // JSON has no NaN; non-finite values become null
            Cell::Float(x) => serde_json::Number::from_f64(*x).map_or(Value::Null, Value::Number),
            Cell::Int(i) => Value::from(*i),
            Cell::Bool(b) => Value::Bool(*b),
            Cell::Empty => Value::Null,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Table { columns: columns.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

/// Writes `dir/stem.<ext>` and returns the path.
pub fn write_table(dir: &Path, stem: &str, table: &Table, format: Format) -> Result<PathBuf> {
    let path = dir.join(format!("{stem}.{}", format.extension()));
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_path(&path).with_context(|| format!("creating {}", path.display()))?;
            w.write_record(&table.columns)?;
            for row in &table.rows {
                w.write_record(row.iter().map(Cell::to_csv))?;
            }
            w.flush()?;
        }
        Format::Json => {
            let rows: Vec<Value> =
                table.rows.iter().map(|r| Value::Array(r.iter().map(Cell::to_json).collect())).collect();
            let doc = serde_json::json!({ "columns": table.columns, "rows": rows });
            write_json(&path, &doc)?;
        }
    }
    Ok(path)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// A table read back as strings; JSON numbers keep their exact text.
#[derive(Debug, Clone)]
pub struct RawTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub fn read_table(path: &Path) -> Result<RawTable> {
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let table = if is_json { read_json_table(path)? } else { read_csv_table(path)? };
    for (k, row) in table.rows.iter().enumerate() {
        if row.len() != table.columns.len() {
            bail!("{}: row {} has {} fields, header has {}", path.display(), k + 1, row.len(), table.columns.len());
        }
    }
    Ok(table)
}

fn read_csv_table(path: &Path) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let columns = reader.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.with_context(|| format!("reading {}", path.display()))?;
        rows.push(record.iter().map(str::to_string).collect());
    }
    Ok(RawTable { columns, rows })
}

fn read_json_table(path: &Path) -> Result<RawTable> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let doc: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let columns = doc["columns"]
        .as_array()
        .context("JSON table needs a \"columns\" array")?
        .iter()
        .map(|c| c.as_str().map(str::to_string).context("column names must be strings"))
        .collect::<Result<Vec<_>>>()?;
    let rows = doc["rows"]
        .as_array()
        .context("JSON table needs a \"rows\" array")?
        .iter()
        .map(|row| {
            row.as_array()
                .context("each row must be an array")
                .map(|cells| {
                    cells
                        .iter()
                        .map(|c| match c {
                            Value::String(s) => s.clone(),
                            Value::Null => String::new(),
                            other => other.to_string(),
                        })
                        .collect()
                })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RawTable { columns, rows })
}

pub fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.parse::<f64>().with_context(|| format!("cannot parse {what} {s:?} as a number"))
}

/// Scores (or ranks) with samples as rows: first column sample ids, other
/// columns one per method.
pub struct MethodTable {
    pub method_ids: Vec<String>,
    pub sample_ids: Vec<String>,
    /// One row per method.
    pub values: Vec<Vec<f64>>,
}

pub fn read_method_table(path: &Path) -> Result<MethodTable> {
    let raw = read_table(path)?;
    if raw.columns.len() < 2 {
        bail!("{}: expected a sample id column followed by method columns", path.display());
    }
    let method_ids: Vec<String> = raw.columns[1..].to_vec();
    let mut values = vec![Vec::with_capacity(raw.rows.len()); method_ids.len()];
    let mut sample_ids = Vec::with_capacity(raw.rows.len());
    for row in &raw.rows {
        sample_ids.push(row[0].clone());
        for (j, cell) in row[1..].iter().enumerate() {
            values[j].push(parse_f64(cell, &format!("value for sample {} method {}", row[0], method_ids[j]))?);
        }
    }
    check_unique(&sample_ids, "sample id", path)?;
    check_unique(&method_ids, "method id", path)?;
    Ok(MethodTable { method_ids, sample_ids, values })
}

fn check_unique(ids: &[String], what: &str, path: &Path) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            bail!("{}: duplicate {what} {id:?}", path.display());
        }
    }
    Ok(())
}

/// Reads a `sample_id,label` file and orders the labels like `sample_ids`.
pub fn read_labels(path: &Path, sample_ids: &[String]) -> Result<Vec<u8>> {
    let raw = read_table(path)?;
    if raw.columns.len() != 2 {
        bail!("{}: labels need exactly two columns (sample id, label)", path.display());
    }
    let mut by_id = std::collections::HashMap::with_capacity(raw.rows.len());
    for row in &raw.rows {
        let label = match row[1].as_str() {
            "0" | "0.0" | "false" => 0u8,
            "1" | "1.0" | "true" => 1u8,
            other => bail!("{}: label {other:?} for sample {} is not 0 or 1", path.display(), row[0]),
        };
        if by_id.insert(row[0].clone(), label).is_some() {
            bail!("{}: duplicate sample id {:?}", path.display(), row[0]);
        }
    }
    if by_id.len() != sample_ids.len() {
        bail!(
            "invalid input: {} has {} samples but the scores have {}",
            path.display(),
            by_id.len(),
            sample_ids.len()
        );
    }
    sample_ids
        .iter()
        .map(|id| by_id.get(id).copied().with_context(|| format!("invalid input: no label for sample {id:?}")))
        .collect()
}
