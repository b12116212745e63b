//! Tabular output shared by the CLI commands.
//!
//! CSV: UTF-8, comma separated, header row, LF line endings, numbers in
//! decimal with a fixed count of significant digits.
//! JSON: `{"meta": {...}, "rows": [{column: value, ...}, ...]}`.

use std::io::Write;

use serde_json::{Map, Number, Value};

pub const DEFAULT_PRECISION: usize = 9;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
    Bool(bool),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_owned())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

#[derive(
    Debug,
    Clone,
    Copy,
    PartialEq,
    Eq,
    Default,
    serde::Serialize,
    serde::Deserialize,
    clap::ValueEnum,
)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: Vec<&'static str>) -> Self {
        Table {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

/// Decimal rendering with `digits` significant digits.
///
/// Plain positional notation for magnitudes in `[1e-6, 1e15)`, scientific
/// otherwise so tiny tail probabilities stay compact.
pub fn format_number(x: f64, digits: usize) -> String {
    let digits = digits.max(1);
    if x == 0.0 {
        return "0".to_owned();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".to_owned()
        } else if x > 0.0 {
            "inf".to_owned()
        } else {
            "-inf".to_owned()
        };
    }
    let magnitude = x.abs();
    if !(1e-6..1e15).contains(&magnitude) {
        return format!("{:.*e}", digits - 1, x);
    }
    // round first so the exponent reflects carries like 9.9999999996 -> 10
    let rounded: f64 = format!("{:.*e}", digits - 1, x).parse().unwrap_or(x);
    let exponent = rounded.abs().log10().floor() as i64;
    let decimals = (digits as i64 - 1 - exponent).max(0) as usize;
    format!("{rounded:.decimals$}")
}

fn cell_text(cell: &Cell, precision: usize) -> String {
    match cell {
        Cell::Num(v) => format_number(*v, precision),
        Cell::Int(v) => v.to_string(),
        Cell::Text(s) => s.clone(),
        Cell::Bool(b) => b.to_string(),
    }
}

fn cell_json(cell: &Cell, precision: usize) -> Value {
    match cell {
        Cell::Num(v) => format_number(*v, precision)
            .parse::<f64>()
            .ok()
            .and_then(Number::from_f64)
            .map(Value::Number)
            .unwrap_or(Value::Null),
        Cell::Int(v) => Value::from(*v),
        Cell::Text(s) => Value::from(s.clone()),
        Cell::Bool(b) => Value::from(*b),
    }
}

pub fn write_csv(table: &Table, precision: usize, out: &mut dyn Write) -> std::io::Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    writer.write_record(&table.columns)?;
    for row in &table.rows {
        writer.write_record(row.iter().map(|c| cell_text(c, precision)))?;
    }
    writer.flush()
}

pub fn write_json(
    table: &Table,
    meta: Value,
    precision: usize,
    out: &mut dyn Write,
) -> std::io::Result<()> {
    let rows: Vec<Value> = table
        .rows
        .iter()
        .map(|row| {
            let obj: Map<String, Value> = table
                .columns
                .iter()
                .zip(row)
                .map(|(col, cell)| ((*col).to_owned(), cell_json(cell, precision)))
                .collect();
            Value::Object(obj)
        })
        .collect();
    let doc = serde_json::json!({ "meta": meta, "rows": rows });
    serde_json::to_writer_pretty(&mut *out, &doc)?;
    out.write_all(b"\n")
}
