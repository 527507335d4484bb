//! Report records and their JSON/CSV renderings.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::config::Format;

/// A float that survives JSON: non-finite values are written as strings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Num(pub f64);

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let x = self.0;
        if x.is_finite() {
            s.serialize_f64(x)
        } else if x.is_nan() {
            s.serialize_str("nan")
        } else if x > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }
}

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            F(f64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::F(x) => Ok(Num(x)),
            Raw::S(s) => match s.as_str() {
                "inf" => Ok(Num(f64::INFINITY)),
                "-inf" => Ok(Num(f64::NEG_INFINITY)),
                "nan" => Ok(Num(f64::NAN)),
                other => Err(serde::de::Error::custom(format!("not a number: {other}"))),
            },
        }
    }
}

impl From<f64> for Num {
    fn from(x: f64) -> Self {
        Num(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub grid_var: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_value: Option<Num>,
    pub lhs: Num,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rhs: Option<Num>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio: Option<Num>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holds: Option<bool>,
    /// Index of the field the row belongs to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<usize>,
}

impl Row {
    pub fn value(grid_var: &str, grid_value: f64, lhs: f64) -> Self {
        Self {
            grid_var: grid_var.into(),
            grid_value: Some(Num(grid_value)),
            lhs: Num(lhs),
            rhs: None,
            ratio: None,
            holds: None,
            field: None,
        }
    }

    pub fn scalar(lhs: f64) -> Self {
        Self {
            grid_value: None,
            ..Self::value("scalar", 0.0, lhs)
        }
    }

    /// A comparison row; the ratio is `lhs / rhs` (0 when both vanish).
    pub fn compare(grid_var: &str, grid_value: f64, lhs: f64, rhs: f64, tol: f64) -> Self {
        let ratio = if lhs == 0.0 && rhs == 0.0 { 0.0 } else { lhs / rhs };
        Self {
            rhs: Some(Num(rhs)),
            ratio: Some(Num(ratio)),
            holds: Some(ratio <= 1.0 + tol),
            ..Self::value(grid_var, grid_value, lhs)
        }
    }

    pub fn for_field(mut self, field: usize) -> Self {
        self.field = Some(field);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub label: String,
    pub holds: bool,
    pub ratio: Num,
    #[serde(default)]
    pub degenerate: bool,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub witness: serde_json::Value,
}

/// Everything except timing: identical inputs give identical bodies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBody {
    pub task: String,
    pub seed: u64,
    /// SHA-256 of each input section (and every file it read).
    pub inputs: BTreeMap<String, String>,
    pub config: serde_json::Value,
    pub scalars: BTreeMap<String, Num>,
    pub rows: Vec<Row>,
    pub verdicts: Vec<Verdict>,
    pub flags: Vec<String>,
}

impl ReportBody {
    pub fn all_hold(&self) -> bool {
        self.verdicts.iter().all(|v| v.holds)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub body: ReportBody,
    pub wall_time_s: f64,
}

impl ReportRecord {
    /// The serialized body, the unit of the determinism contract.
    pub fn body_json(&self) -> String {
        serde_json::to_string(&self.body).expect("report bodies serialize")
    }
}

fn sig17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn opt(x: Option<Num>) -> String {
    x.map(|n| sig17(n.0)).unwrap_or_default()
}

pub fn emit_report(record: &ReportRecord, format: Format) -> String {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(record).expect("report records serialize");
            s.push('\n');
            s
        }
        Format::Csv => {
            let body = &record.body;
            let mut out = format!("# task={} seed={}", body.task, body.seed);
            for (k, v) in &body.inputs {
                let _ = write!(out, " {k}={v}");
            }
            out.push('\n');
            out.push_str("grid_var,grid_value,lhs,rhs,ratio,holds\n");
            if body.rows.is_empty() {
                out.push_str("scalar,,,,,\n");
            }
            for r in &body.rows {
                let holds = r.holds.map(|h| h.to_string()).unwrap_or_default();
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    r.grid_var,
                    opt(r.grid_value),
                    sig17(r.lhs.0),
                    opt(r.rhs),
                    opt(r.ratio),
                    holds
                );
            }
            out
        }
    }
}
