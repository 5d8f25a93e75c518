//! CSV/JSON report emission. Both formats are generated from the same
//! ordered key-value rows, so they always carry identical values.

use std::io::Write;
use std::path::Path;

use serde_json::Value;

use crate::CliResult;

pub type Row = Vec<(&'static str, Value)>;

#[derive(Default)]
pub struct Report {
    rows: Vec<Row>,
}

impl Report {
    pub fn push(&mut self, row: Row) {
        if let Some(first) = self.rows.first() {
            debug_assert!(
                first.iter().map(|(k, _)| k).eq(row.iter().map(|(k, _)| k)),
                "all rows of a report share one schema"
            );
        }
        self.rows.push(row);
    }

    pub fn write(&self, json: bool, out: Option<&Path>) -> CliResult<()> {
        let text = if json { self.to_json() } else { self.to_csv() };
        match out {
            Some(path) => std::fs::write(path, text)?,
            None => {
                let stdout = std::io::stdout();
                stdout.lock().write_all(text.as_bytes())?;
            }
        }
        Ok(())
    }

    fn to_csv(&self) -> String {
        let mut text = String::new();
        if let Some(first) = self.rows.first() {
            let header: Vec<&str> = first.iter().map(|(k, _)| *k).collect();
            text.push_str(&header.join(","));
            text.push('\n');
            for row in &self.rows {
                let fields: Vec<String> = row.iter().map(|(_, v)| csv_field(v)).collect();
                text.push_str(&fields.join(","));
                text.push('\n');
            }
        }
        text
    }

    fn to_json(&self) -> String {
        let array: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let mut object = serde_json::Map::new();
                for (key, value) in row {
                    object.insert((*key).to_string(), value.clone());
                }
                Value::Object(object)
            })
            .collect();
        let mut text = serde_json::to_string_pretty(&array).expect("report rows are plain JSON");
        text.push('\n');
        text
    }
}

fn csv_field(value: &Value) -> String {
    match value {
        Value::String(s) => {
            if s.contains([',', '"', '\n']) {
                format!("\"{}\"", s.replace('"', "\"\""))
            } else {
                s.clone()
            }
        }
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

/// Finite floats only; NaN/inf have no JSON encoding and no place in a report.
pub fn num(value: f64) -> Value {
    debug_assert!(value.is_finite(), "report numbers must be finite");
    Value::from(value)
}
