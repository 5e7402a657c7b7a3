//! Evaluation output: tab-separated tables for people, one JSON object per
//! row for machines.

use std::path::Path;

use serde_json::{Map, Value};

use crate::jsonl::{self, JsonlError};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Real(f64),
    Int(u64),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Real(v) => format!("{v:.4}"),
            Cell::Int(v) => v.to_string(),
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Cell::Text(s) => Value::String(s.clone()),
            Cell::Real(v) => serde_json::Number::from_f64(*v).map_or(Value::Null, Value::Number),
            Cell::Int(v) => Value::from(*v),
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

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Real(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReportTable {
    pub title: Option<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    /// Footnote lines, rendered after the rows as `# ...` comments.
    pub notes: Vec<String>,
}

impl ReportTable {
    pub fn new(columns: &[&str]) -> Self {
        ReportTable {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            ..Default::default()
        }
    }

    pub fn titled(mut self, title: impl Into<String>) -> Self {
        self.title = Some(title.into());
        self
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        if let Some(t) = &self.title {
            out.push_str(&format!("# {t}\n"));
        }
        out.push_str(&self.columns.join("\t"));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            out.push_str(&cells.join("\t"));
            out.push('\n');
        }
        for n in &self.notes {
            out.push_str(&format!("# {n}\n"));
        }
        out
    }

    /// One object per row, keyed by column name, values at full precision.
    pub fn records(&self) -> Vec<Value> {
        self.rows
            .iter()
            .map(|row| {
                let mut obj = Map::new();
                if let Some(t) = &self.title {
                    obj.insert("table".into(), Value::String(t.clone()));
                }
                for (col, cell) in self.columns.iter().zip(row) {
                    obj.insert(col.clone(), cell.to_json());
                }
                Value::Object(obj)
            })
            .collect()
    }

    pub fn write_records(&self, path: impl AsRef<Path>) -> Result<(), JsonlError> {
        jsonl::write(path, self.records())
    }
}

/// Concatenated records of several tables.
pub fn write_all_records(tables: &[ReportTable], path: impl AsRef<Path>) -> Result<(), JsonlError> {
    jsonl::write(path, tables.iter().flat_map(ReportTable::records))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tsv_and_records() {
        let mut t = ReportTable::new(&["mode", "Precision"]).titled("demo");
        t.push(vec!["Sparse".into(), 0.52941.into()]);
        t.notes.push("footnote".into());
        assert_eq!(t.to_tsv(), "# demo\nmode\tPrecision\nSparse\t0.5294\n# footnote\n");
        let rec = &t.records()[0];
        assert_eq!(rec["Precision"], serde_json::json!(0.52941));
        assert_eq!(rec["table"], "demo");
    }
}
