use std::path::Path;

use chrono::{DateTime, Utc};
use memop_core::schema::{decode_value, parse_utc};
use memop_core::validate::validate;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::assertion::Assertion;
use crate::BenchError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Nl {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub en: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zh: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstructionType {
    Direct,
    Indirect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    Single,
    Workflow,
}

/// One benchmark case. Instances are kept as raw JSON so that candidate
/// lists can be compared and executed through the same pipeline as gold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchCase {
    pub case_id: String,
    pub nl: Nl,
    pub instruction_type: InstructionType,
    pub structure: Structure,
    #[serde(default)]
    pub prerequisites: Vec<Value>,
    pub schema_list: Vec<Value>,
    #[serde(default)]
    pub expectations: Vec<Assertion>,
    pub clock: String,
}

impl BenchCase {
    pub fn clock(&self) -> DateTime<Utc> {
        parse_utc(&self.clock).expect("clock checked at load time")
    }

    /// Structural checks applied at load time.
    pub fn check(&self) -> Result<(), String> {
        if self.case_id.trim().is_empty() {
            return Err("case_id is empty".into());
        }
        if self.nl.en.is_none() && self.nl.zh.is_none() {
            return Err("nl needs at least one language".into());
        }
        parse_utc(&self.clock).map_err(|e| format!("clock: {e}"))?;
        if self.schema_list.is_empty() {
            return Err("schema_list is empty".into());
        }
        if self.structure == Structure::Workflow && self.schema_list.len() < 2 {
            return Err("a workflow needs at least two instances".into());
        }
        let lists = [
            ("prerequisites", &self.prerequisites),
            ("schema_list", &self.schema_list),
        ];
        for (name, list) in lists {
            for (i, v) in list.iter().enumerate() {
                let inst = decode_value(v).map_err(|e| format!("{name}[{i}]: {e}"))?;
                let report = validate(&inst);
                if !report.ok {
                    return Err(format!("{name}[{i}]: {}", report.codes().join(",")));
                }
            }
        }
        for (i, a) in self.expectations.iter().enumerate() {
            if a.op_index >= self.schema_list.len() {
                return Err(format!(
                    "expectations[{i}]: op_index {} is out of range",
                    a.op_index
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoadDiagnostic {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedCases {
    pub cases: Vec<BenchCase>,
    pub diagnostics: Vec<LoadDiagnostic>,
}

/// Parses a JSONL case file. Blank lines are ignored; malformed or invalid
/// cases are reported by 1-based line number and skipped.
pub fn parse_cases(text: &str) -> Result<LoadedCases, BenchError> {
    let mut cases = Vec::new();
    let mut diagnostics = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<BenchCase>(line)
            .map_err(|e| e.to_string())
            .and_then(|c| c.check().map(|_| c));
        match parsed {
            Ok(c) => cases.push(c),
            Err(message) => diagnostics.push(LoadDiagnostic {
                line: i + 1,
                message,
            }),
        }
    }
    if cases.is_empty() {
        return Err(BenchError::NoValidCases(diagnostics));
    }
    Ok(LoadedCases { cases, diagnostics })
}

pub fn load_cases(path: impl AsRef<Path>) -> Result<LoadedCases, BenchError> {
    let p = path.as_ref();
    let text =
        std::fs::read_to_string(p).map_err(|e| BenchError::Io(format!("{}: {e}", p.display())))?;
    parse_cases(&text)
}

/// A generated schema list for one case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub case_id: String,
    pub schema_list: Vec<Value>,
}

/// Reads a JSONL candidate file. Lines that do not parse are reported and
/// skipped; their cases then count as missing.
pub fn parse_candidates(text: &str) -> (Vec<Candidate>, Vec<LoadDiagnostic>) {
    let mut out = Vec::new();
    let mut diags = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Candidate>(line) {
            Ok(c) => out.push(c),
            Err(e) => diags.push(LoadDiagnostic {
                line: i + 1,
                message: e.to_string(),
            }),
        }
    }
    (out, diags)
}

pub fn load_candidates(
    path: impl AsRef<Path>,
) -> Result<(Vec<Candidate>, Vec<LoadDiagnostic>), BenchError> {
    let p = path.as_ref();
    let text =
        std::fs::read_to_string(p).map_err(|e| BenchError::Io(format!("{}: {e}", p.display())))?;
    Ok(parse_candidates(&text))
}
