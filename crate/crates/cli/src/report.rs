use std::io::Write;
use std::path::Path;

use serde_json::{json, Map, Value};

use crate::args::{Format, OutputArgs};
use crate::failure::Failure;

pub const TOOL: &str = "robust-wald";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Bool(bool),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

/// Command output in both shapes; only one is written.
#[derive(Debug, Clone)]
pub struct Report {
    pub command: &'static str,
    pub config: Value,
    pub results: Value,
    pub table: Table,
}

/// JSON number, or null when not finite.
pub fn num(v: f64) -> Value {
    serde_json::Number::from_f64(v).map(Value::Number).unwrap_or(Value::Null)
}

pub fn nums(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|&x| num(x)).collect())
}

pub fn round_to(v: f64, digits: usize) -> f64 {
    let scale = 10f64.powi(digits as i32);
    let s = v * scale;
    if !s.is_finite() {
        return v;
    }
    let r = s.round() / scale;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn round_value(v: &mut Value, digits: usize) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(x) = n.as_f64() {
                *v = num(round_to(x, digits));
            }
        }
        Value::Array(items) => items.iter_mut().for_each(|x| round_value(x, digits)),
        Value::Object(map) => map.values_mut().for_each(|x| round_value(x, digits)),
        _ => {}
    }
}

fn format_float(v: f64, round: Option<usize>) -> String {
    match round {
        _ if !v.is_finite() => format!("{v}"),
        Some(k) => {
            let s = format!("{:.*}", k, round_to(v, k));
            match s.strip_prefix('-') {
                Some(rest) if rest.chars().all(|c| c == '0' || c == '.') => rest.to_string(),
                _ => s,
            }
        }
        None => format!("{v:?}"),
    }
}

impl Report {
    pub fn to_json(&self, round: Option<usize>) -> String {
        let mut results = self.results.clone();
        if let Some(k) = round {
            round_value(&mut results, k);
        }
        let mut top = Map::new();
        top.insert("tool".into(), json!(TOOL));
        top.insert("version".into(), json!(VERSION));
        top.insert("command".into(), json!(self.command));
        top.insert("config".into(), self.config.clone());
        top.insert("results".into(), results);
        let mut s = serde_json::to_string_pretty(&Value::Object(top)).expect("JSON values always serialize");
        s.push('\n');
        s
    }

    pub fn to_csv(&self, round: Option<usize>) -> Result<String, Failure> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.table.header).map_err(|e| Failure::output(e.to_string()))?;
        for row in &self.table.rows {
            let fields: Vec<String> = row
                .iter()
                .map(|c| match c {
                    Cell::Num(v) => format_float(*v, round),
                    Cell::Int(v) => v.to_string(),
                    Cell::Bool(v) => v.to_string(),
                    Cell::Text(s) => s.clone(),
                })
                .collect();
            w.write_record(&fields).map_err(|e| Failure::output(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Failure::output(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Failure::output(e.to_string()))
    }

    pub fn render(&self, out: &OutputArgs) -> Result<String, Failure> {
        match out.format {
            Format::Json => Ok(self.to_json(out.round)),
            Format::Csv => self.to_csv(out.round),
        }
    }

    pub fn emit(&self, out: &OutputArgs) -> Result<(), Failure> {
        let text = self.render(out)?;
        match &out.output {
            Some(path) => write_file(path, &text),
            None => {
                let mut stdout = std::io::stdout().lock();
                stdout
                    .write_all(text.as_bytes())
                    .and_then(|_| stdout.flush())
                    .map_err(|e| Failure::output(e.to_string()))
            }
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::output(format!("cannot write {}: {e}", path.display())))
}
