use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

/// What every subcommand prints.
#[derive(Serialize)]
pub struct RunReport {
    pub command: Vec<String>,
    pub inputs_digest: String,
    pub results: Map<String, Value>,
    pub seeds: BTreeMap<String, u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_seconds: Option<f64>,
}

/// Rows for CSV output when a command produces a table rather than scalars.
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

pub struct Output {
    pub report: RunReport,
    pub table: Option<Table>,
}

/// SHA-256 over the argument list and the bytes of every input file, so a
/// report identifies exactly what it was computed from.
pub fn digest(args: &[String], inputs: &[Vec<u8>]) -> String {
    let mut h = Sha256::new();
    for a in args {
        h.update((a.len() as u64).to_le_bytes());
        h.update(a.as_bytes());
    }
    for bytes in inputs {
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    }
    let mut out = String::from("sha256:");
    for b in h.finalize() {
        write!(out, "{b:02x}").unwrap();
    }
    out
}

fn csv_field(v: &Value) -> String {
    let s = match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    };
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s
    }
}

impl Output {
    pub fn json(&self) -> String {
        serde_json::to_string_pretty(&self.report).expect("report serializes") + "\n"
    }

    /// A table prints as-is; otherwise one `key,value` line per result,
    /// followed by the seeds.
    pub fn csv(&self) -> String {
        let mut out = String::new();
        if let Some(t) = &self.table {
            out.push_str(&t.header.join(","));
            out.push('\n');
            for r in &t.rows {
                out.push_str(&r.join(","));
                out.push('\n');
            }
            return out;
        }
        out.push_str("key,value\n");
        for (k, v) in &self.report.results {
            writeln!(out, "{k},{}", csv_field(v)).unwrap();
        }
        for (k, v) in &self.report.seeds {
            writeln!(out, "seed.{k},{v}").unwrap();
        }
        if let Some(t) = self.report.wall_time_seconds {
            writeln!(out, "wall_time_seconds,{t}").unwrap();
        }
        out
    }
}
