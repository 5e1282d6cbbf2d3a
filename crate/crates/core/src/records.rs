//! Tabular output shared by every sweep: one value per row.
//!
//! CSV floats are written in scientific notation with 17 significant digits
//! and JSON floats in shortest round-trip form, so both parse back to the
//! same bits. An optional leading `# ` line in CSV carries the run config.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::chain::{ChainSpec, Model};
use crate::error::{Error, Result};
use crate::thermo::{Provenance, SensitivityReport};

pub const COLUMNS: [&str; 11] = [
    "model",
    "N",
    "J",
    "h",
    "gamma",
    "beta",
    "quantity",
    "value",
    "provenance",
    "estimator",
    "valid",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub model: Model,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "J")]
    pub j: f64,
    pub h: f64,
    pub gamma: f64,
    pub beta: f64,
    pub quantity: String,
    pub value: f64,
    pub provenance: Provenance,
    #[serde(default)]
    pub estimator: Option<String>,
    /// Inside the validity window of an approximation; empty for exact values.
    #[serde(default)]
    pub valid: Option<bool>,
}

impl Record {
    pub fn new(spec: &ChainSpec, quantity: &str, value: f64, provenance: Provenance) -> Self {
        Record {
            model: spec.model,
            n: spec.n,
            j: spec.j,
            h: spec.h,
            gamma: spec.gamma,
            beta: spec.beta,
            quantity: quantity.to_string(),
            value,
            provenance,
            estimator: None,
            valid: None,
        }
    }

    /// `report.value / N` under `quantity`.
    pub fn per_spin(report: &SensitivityReport, quantity: &str) -> Self {
        let mut r = Record::new(&report.spec, quantity, report.per_spin, report.provenance);
        if report.provenance == Provenance::LowTempApprox {
            r.valid = Some(report.in_window);
        }
        r
    }

    pub fn with_estimator(mut self, label: impl Into<String>) -> Self {
        self.estimator = Some(label.into());
        self
    }

    pub fn with_valid(mut self, valid: bool) -> Self {
        self.valid = Some(valid);
        self
    }

    fn check(&self) -> Result<()> {
        for (name, v) in [
            ("J", self.j),
            ("h", self.h),
            ("gamma", self.gamma),
            ("beta", self.beta),
            ("value", self.value),
        ] {
            if !v.is_finite() {
                return Err(Error::Format(format!("{} = {v} in '{}' is not finite", name, self.quantity)));
            }
        }
        if self.quantity.contains([',', '\n', '"']) {
            return Err(Error::Format(format!("quantity name '{}' needs quoting", self.quantity)));
        }
        Ok(())
    }
}

/// 17 significant digits, scientific.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_float(s: &str) -> Result<f64> {
    s.parse::<f64>().map_err(|e| Error::Format(format!("bad number '{s}': {e}")))
}

pub fn write_csv<W: Write>(mut out: W, records: &[Record], config: Option<&serde_json::Value>) -> Result<()> {
    let io = |e: std::io::Error| Error::Format(e.to_string());
    if let Some(cfg) = config {
        writeln!(out, "# {}", serde_json::to_string(cfg).map_err(|e| Error::Format(e.to_string()))?).map_err(io)?;
    }
    writeln!(out, "{}", COLUMNS.join(",")).map_err(io)?;
    for r in records {
        r.check()?;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.model.as_str(),
            r.n,
            format_float(r.j),
            format_float(r.h),
            format_float(r.gamma),
            format_float(r.beta),
            r.quantity,
            format_float(r.value),
            r.provenance.as_str(),
            r.estimator.as_deref().unwrap_or(""),
            r.valid.map(|b| b.to_string()).unwrap_or_default(),
        )
        .map_err(io)?;
    }
    Ok(())
}

/// Parses a CSV written by [`write_csv`]; the config line, if any, is returned raw.
pub fn read_csv<R: BufRead>(input: R) -> Result<(Vec<Record>, Option<serde_json::Value>)> {
    let mut config = None;
    let mut header_seen = false;
    let mut records = Vec::new();
    for line in input.lines() {
        let line = line.map_err(|e| Error::Format(e.to_string()))?;
        if let Some(rest) = line.strip_prefix("# ") {
            config = Some(serde_json::from_str(rest).map_err(|e| Error::Format(e.to_string()))?);
            continue;
        }
        if line.is_empty() {
            continue;
        }
        if !header_seen {
            if line != COLUMNS.join(",") {
                return Err(Error::Format(format!("unexpected header '{line}'")));
            }
            header_seen = true;
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != COLUMNS.len() {
            return Err(Error::Format(format!("expected {} fields, got {}", COLUMNS.len(), f.len())));
        }
        records.push(Record {
            model: f[0].parse()?,
            n: f[1].parse().map_err(|e| Error::Format(format!("bad N '{}': {e}", f[1])))?,
            j: parse_float(f[2])?,
            h: parse_float(f[3])?,
            gamma: parse_float(f[4])?,
            beta: parse_float(f[5])?,
            quantity: f[6].to_string(),
            value: parse_float(f[7])?,
            provenance: f[8].parse()?,
            estimator: (!f[9].is_empty()).then(|| f[9].to_string()),
            valid: match f[10] {
                "" => None,
                "true" => Some(true),
                "false" => Some(false),
                other => return Err(Error::Format(format!("bad flag '{other}'"))),
            },
        });
    }
    Ok((records, config))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsonDocument {
    #[serde(default)]
    pub config: Option<serde_json::Value>,
    pub records: Vec<Record>,
}

pub fn write_json<W: Write>(out: W, records: &[Record], config: Option<&serde_json::Value>) -> Result<()> {
    for r in records {
        r.check()?;
    }
    let doc = JsonDocument {
        config: config.cloned(),
        records: records.to_vec(),
    };
    serde_json::to_writer_pretty(out, &doc).map_err(|e| Error::Format(e.to_string()))
}

pub fn read_json<R: std::io::Read>(input: R) -> Result<JsonDocument> {
    serde_json::from_reader(input).map_err(|e| Error::Format(e.to_string()))
}
