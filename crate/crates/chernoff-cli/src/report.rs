//! Report assembly and deterministic serialization.
//!
//! Reports must be byte-identical across reruns, so floats print with a
//! fixed 17-significant-digit format and JSON maps iterate in sorted key
//! order. Wall-clock timings are inherently non-reproducible and go to a
//! separate `timings.json` that is excluded from the determinism contract.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde_json::Value;

use chernoff::GridFunction;

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// One ladder row of the report.
#[derive(Debug, Clone)]
pub struct LevelRow {
    pub level: usize,
    pub delta: f64,
    pub h: f64,
    pub k: usize,
    pub error: f64,
    pub order: Option<f64>,
}

/// Everything a run produces.
#[derive(Debug, Default)]
pub struct RunReport {
    pub experiment: String,
    pub config_echo: Value,
    pub rows: Vec<LevelRow>,
    /// Per-level function snapshots, written as `function_<level>.csv`.
    pub snapshots: Vec<(usize, GridFunction)>,
    /// Named verdicts; the run passes when all hold.
    pub verdicts: BTreeMap<String, bool>,
    /// Kind-specific scalar diagnostics.
    pub extras: BTreeMap<String, Value>,
    /// Wall times per level in seconds (not part of the deterministic
    /// surface).
    pub wall_times: Vec<f64>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.verdicts.values().all(|v| *v)
    }

    pub fn errors_csv(&self) -> String {
        let mut out = String::from("level,delta,h,k,error,order\n");
        for r in &self.rows {
            let order = r.order.map(|o| format!("{o:.16e}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{:.16e},{:.16e},{},{:.16e},{}\n",
                r.level, r.delta, r.h, r.k, r.error, order
            ));
        }
        out
    }

    pub fn summary_value(&self) -> Value {
        let mut root = serde_json::Map::new();
        root.insert("artifact_version".into(), Value::String(ARTIFACT_VERSION.into()));
        root.insert(
            "schema_version".into(),
            Value::Number(crate::config::SCHEMA_VERSION.into()),
        );
        root.insert("experiment".into(), Value::String(self.experiment.clone()));
        root.insert("config".into(), self.config_echo.clone());
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| {
                let mut m = serde_json::Map::new();
                m.insert("level".into(), Value::Number(r.level.into()));
                m.insert("delta".into(), float(r.delta));
                m.insert("h".into(), float(r.h));
                m.insert("k".into(), Value::Number(r.k.into()));
                m.insert("error".into(), float(r.error));
                if let Some(o) = r.order {
                    m.insert("order".into(), float(o));
                }
                Value::Object(m)
            })
            .collect();
        root.insert("levels".into(), Value::Array(rows));
        let verdicts: serde_json::Map<String, Value> = self
            .verdicts
            .iter()
            .map(|(k, v)| (k.clone(), Value::Bool(*v)))
            .collect();
        root.insert("verdicts".into(), Value::Object(verdicts));
        root.insert("pass".into(), Value::Bool(self.passed()));
        let extras: serde_json::Map<String, Value> =
            self.extras.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        root.insert("extras".into(), Value::Object(extras));
        Value::Object(root)
    }

    /// Writes `summary.json`, `errors.csv` (when a ladder exists), the
    /// per-level snapshots, and the non-deterministic `timings.json`.
    pub fn emit(&self, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("summary.json"), print_json(&self.summary_value()))?;
        if !self.rows.is_empty() {
            fs::write(dir.join("errors.csv"), self.errors_csv())?;
        }
        for (level, snapshot) in &self.snapshots {
            fs::write(dir.join(format!("function_{level}.csv")), snapshot.to_csv())?;
        }
        let mut timing = serde_json::Map::new();
        timing.insert(
            "wall_times_seconds".into(),
            Value::Array(self.wall_times.iter().map(|&t| float(t)).collect()),
        );
        fs::write(dir.join("timings.json"), print_json(&Value::Object(timing)))?;
        Ok(())
    }
}

pub fn float(v: f64) -> Value {
    Value::Number(serde_json::Number::from_f64(v).expect("finite float in report"))
}

/// Sorted-key JSON printer with every float at 17 significant digits.
pub fn print_json(value: &Value) -> String {
    let mut out = String::new();
    write_value(value, 0, &mut out);
    out.push('\n');
    out
}

fn write_value(value: &Value, indent: usize, out: &mut String) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else if let Some(u) = n.as_u64() {
                out.push_str(&u.to_string());
            } else {
                out.push_str(&format!("{:.16e}", n.as_f64().unwrap()));
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string encodes")),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push('\n');
                out.push_str(&"  ".repeat(indent + 1));
                write_value(item, indent + 1, out);
            }
            out.push('\n');
            out.push_str(&"  ".repeat(indent));
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push('{');
            // BTreeMap-backed: iteration is already key-sorted
            for (i, (k, v)) in map.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push('\n');
                out.push_str(&"  ".repeat(indent + 1));
                out.push_str(&serde_json::to_string(k).expect("key encodes"));
                out.push_str(": ");
                write_value(v, indent + 1, out);
            }
            out.push('\n');
            out.push_str(&"  ".repeat(indent));
            out.push('}');
        }
    }
}
