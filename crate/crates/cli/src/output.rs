//! Self-describing result documents and their flat CSV form.

use std::path::Path;

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use tfrc_core::model::WithdrawalSchedule;

use crate::config::RunSpec;
use crate::CliError;

/// Significant digits kept for every floating-point number written out.
pub const SIGNIFICANT_DIGITS: usize = 12;

pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.prec$e}", prec = SIGNIFICANT_DIGITS - 1).parse().expect("formatted float parses")
}

/// Rounds every non-integer number in place.
pub fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(x) = n.as_f64() {
                *v = json!(round_sig(x));
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Hash of the cell being modeled: the model without its stair count, plus the
/// resolved withdrawal schedule. Solve and simulate runs of one cell share it.
pub fn cell_hash(spec: &RunSpec, sched: &WithdrawalSchedule) -> String {
    let mut model = serde_json::to_value(&spec.model).expect("model serializes");
    if let Value::Object(m) = &mut model {
        m.remove("stairs");
    }
    let mut cell = json!({ "model": model, "schedule": sched.lists() });
    round_value(&mut cell);
    sha256_hex(cell.to_string().as_bytes())
}

/// Wraps `results` with the command, resolved config and hashes.
pub fn document(command: &str, spec: &RunSpec, sched: &WithdrawalSchedule, results: Value) -> Value {
    let mut doc = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config": spec,
        "cell_hash": cell_hash(spec, sched),
        "results": results,
    });
    round_value(&mut doc);
    let hash = content_hash(&doc);
    doc["content_hash"] = Value::String(hash);
    doc
}

/// SHA-256 of the compact document with any `content_hash` removed.
pub fn content_hash(doc: &Value) -> String {
    let mut body = doc.clone();
    if let Value::Object(m) = &mut body {
        m.remove("content_hash");
    }
    sha256_hex(body.to_string().as_bytes())
}

pub fn verify(doc: &Value) -> bool {
    doc.get("content_hash").and_then(Value::as_str) == Some(content_hash(doc).as_str())
}

pub fn read_document(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Output(format!("{} is not a result document: {e}", path.display())))
}

pub fn write_json(path: Option<&Path>, doc: &Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(doc).expect("documents serialize");
    match path {
        Some(p) => std::fs::write(p, text + "\n").map_err(|e| CliError::io(format!("writing {}", p.display()), e)),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

/// Long-form table; cells are already formatted.
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: Vec<&'static str>) -> Self {
        Self { header, rows: Vec::new() }
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), CliError> {
        let fail = |e: csv::Error| CliError::Output(format!("writing {}: {e}", path.display()));
        let mut w = csv::Writer::from_path(path).map_err(fail)?;
        w.write_record(&self.header).map_err(fail)?;
        for row in &self.rows {
            w.write_record(row).map_err(fail)?;
        }
        w.flush().map_err(|e| CliError::io(format!("writing {}", path.display()), e))
    }
}

/// A number as it appears in the JSON output; empty when undefined.
pub fn cell(x: Option<f64>) -> String {
    x.map(|v| serde_json::to_string(&round_sig(v)).expect("finite or null")).unwrap_or_default()
}

/// Fixed-width text rendering for terminals.
pub fn render(table: &Table) -> String {
    let mut widths: Vec<usize> = table.header.iter().map(|h| h.len()).collect();
    for row in &table.rows {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: Vec<&str>| -> String {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        padded.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(table.header.clone());
    for row in &table.rows {
        out += &line(row.iter().map(String::as_str).collect());
    }
    out
}

pub(crate) fn object(pairs: impl IntoIterator<Item = (String, Value)>) -> Value {
    Value::Object(pairs.into_iter().collect::<Map<_, _>>())
}
