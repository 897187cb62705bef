use std::io::Write;

use fblrate::sweeps::SweepTable;
use serde::Serialize;
use serde_json::{Map, Value};

pub const SCHEMA_VERSION: &str = "1.0";

/// What a command computed, in one of three shapes.
#[derive(Debug, Clone)]
pub enum Results {
    /// Named scalars (one CSV row).
    Scalars(Map<String, Value>),
    /// A sweep over one axis with one column per configuration.
    Sweep(SweepTable),
    /// A plain table of heterogeneous rows.
    Rows { columns: Vec<String>, rows: Vec<Vec<Value>> },
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputRecord {
    pub schema_version: String,
    pub command: String,
    pub parameters: Map<String, Value>,
    pub results: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc_metadata: Option<Value>,
}

/// Non-finite numbers become `null`.
pub fn num(x: f64) -> Value {
    Value::from(x)
}

pub fn opt_num(x: Option<f64>) -> Value {
    x.map_or(Value::Null, num)
}

impl Results {
    pub fn to_json(&self) -> Value {
        match self {
            Results::Scalars(m) => Value::Object(m.clone()),
            Results::Sweep(t) => serde_json::to_value(t).unwrap_or(Value::Null),
            Results::Rows { columns, rows } => {
                let mut m = Map::new();
                m.insert("columns".into(), Value::from(columns.clone()));
                m.insert("rows".into(), Value::Array(rows.iter().map(|r| Value::Array(r.clone())).collect()));
                Value::Object(m)
            }
        }
    }

    /// Header plus rows of cells, as they appear in the CSV encoding.
    pub fn to_grid(&self) -> (Vec<String>, Vec<Vec<Value>>) {
        match self {
            Results::Scalars(m) => (m.keys().cloned().collect(), vec![m.values().cloned().collect()]),
            Results::Sweep(t) => sweep_grid(t),
            Results::Rows { columns, rows } => (columns.clone(), rows.clone()),
        }
    }
}

fn sweep_grid(t: &SweepTable) -> (Vec<String>, Vec<Vec<Value>>) {
    let mut header = vec![t.axis_name.clone()];
    for c in &t.columns {
        header.push(format!("{}_{}", c.label, t.value_name));
        if c.stderr.is_some() {
            header.push(format!("{}_stderr", c.label));
        }
    }
    let rows = t
        .axis_values
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let mut row = vec![num(x)];
            for c in &t.columns {
                row.push(opt_num(c.values[i]));
                if let Some(se) = &c.stderr {
                    row.push(opt_num(se[i]));
                }
            }
            row
        })
        .collect();
    (header, rows)
}

/// Same text a number has in the JSON encoding; `null` becomes an empty cell.
pub fn cell_text(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

pub fn write_json<W: Write + ?Sized>(rec: &OutputRecord, w: &mut W) -> std::io::Result<()> {
    serde_json::to_writer_pretty(&mut *w, rec)?;
    writeln!(w)
}

pub fn write_csv<W: Write + ?Sized>(results: &Results, w: &mut W) -> std::io::Result<()> {
    let (header, rows) = results.to_grid();
    let mut out = csv::Writer::from_writer(w);
    out.write_record(&header)?;
    for row in rows {
        out.write_record(row.iter().map(cell_text))?;
    }
    out.flush()
}
