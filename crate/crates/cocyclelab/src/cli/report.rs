use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::cocycle::InvariantReport;
use crate::error::{Error, Result};
use crate::kam::KamStepRecord;

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// One named inequality with its signed margin (positive when it holds).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Margin {
    pub step: usize,
    pub name: String,
    pub margin: f64,
    pub holds: bool,
}

/// Output of every command. Byte-identical for equal inputs unless timing is attached.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub command: String,
    pub tool_version: String,
    pub spec_digest: Option<String>,
    pub seed: Option<u64>,
    pub invariants: Vec<InvariantReport>,
    pub result: Value,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub trajectory: Vec<Value>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub margins: Vec<Margin>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_clock_s: Option<f64>,
    pub exit_code: i32,
    pub error: Option<String>,
}

impl RunReport {
    pub fn new(command: &str, spec_digest: Option<String>) -> Self {
        RunReport {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            tool_version: TOOL_VERSION.to_string(),
            spec_digest,
            seed: None,
            invariants: Vec::new(),
            result: Value::Null,
            trajectory: Vec::new(),
            margins: Vec::new(),
            wall_clock_s: None,
            exit_code: 0,
            error: None,
        }
    }

    /// Records `e` and its exit code.
    pub fn fail(mut self, e: &Error) -> Self {
        self.exit_code = e.exit_code();
        self.error = Some(e.to_string());
        self
    }

    /// Folds a fallible body into the report.
    pub fn finish(self, body: impl FnOnce(&mut RunReport) -> Result<()>) -> Self {
        let mut r = self;
        match body(&mut r) {
            Ok(()) => r,
            Err(e) => r.fail(&e),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Writes the trajectory as JSON lines.
    pub fn write_trajectory(&self, path: &Path) -> std::io::Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for t in &self.trajectory {
            writeln!(f, "{}", serde_json::to_string(t).expect("values serialize"))?;
        }
        f.flush()
    }

    pub fn write_margins_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["step", "name", "margin", "holds"])?;
        for m in &self.margins {
            w.write_record([m.step.to_string(), m.name.clone(), format!("{:e}", m.margin), m.holds.to_string()])?;
        }
        w.flush()
    }
}

pub fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report payloads serialize")
}

/// The four inequalities tracked per KAM step.
pub fn kam_margins(records: &[KamStepRecord]) -> Vec<Margin> {
    let mut out = Vec::new();
    for r in records {
        let mut push = |name: &str, c: crate::kam::CondCheck| {
            out.push(Margin { step: r.n, name: name.into(), margin: c.margin, holds: c.holds });
        };
        push("cond1", r.cond1);
        push("cond2", r.cond2);
        push("cond3", r.cond3);
        if let Some(e) = r.estimate {
            push("estimate", e);
        }
    }
    out
}
