use memop_core::adapter::Status;
use memop_core::schema::{canonical_json, OpKind};
use serde::Serialize;
use serde_json::Value;

use crate::case::LoadDiagnostic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseStatus {
    Scored,
    /// Scenario setup or gold binding failed; excluded from every metric.
    Voided,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OpSummary {
    pub op: Option<OpKind>,
    pub status: Status,
    pub codes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssertionOutcome {
    pub op_index: usize,
    pub kind: String,
    pub satisfied: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseReport {
    pub case_id: String,
    pub status: CaseStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub void_reason: Option<String>,
    pub candidate_missing: bool,
    pub sma: u32,
    pub esr: u32,
    /// Positions whose canonical encodings match, over the longer list length.
    pub sma_partial: [usize; 2],
    pub assertions_total: usize,
    pub assertions_satisfied: usize,
    pub ops: Vec<OpSummary>,
    pub assertions: Vec<AssertionOutcome>,
}

impl CaseReport {
    pub fn voided(case_id: &str, reason: String) -> Self {
        CaseReport {
            case_id: case_id.to_string(),
            status: CaseStatus::Voided,
            void_reason: Some(reason),
            candidate_missing: false,
            sma: 0,
            esr: 0,
            sma_partial: [0, 0],
            assertions_total: 0,
            assertions_satisfied: 0,
            ops: Vec::new(),
            assertions: Vec::new(),
        }
    }
}

/// Integer tallies the metrics are computed from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub cases_loaded: usize,
    pub cases_scored: usize,
    pub cases_voided: usize,
    pub candidates_missing: usize,
    pub sma_hits: usize,
    pub esr_hits: usize,
    pub assertions_total: usize,
    pub assertions_satisfied: usize,
    pub sma_partial_hits: usize,
    pub sma_partial_total: usize,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    /// `gold` for a self-test, `candidate` when a candidate file was scored.
    pub mode: String,
    pub sma: Option<f64>,
    pub esr: Option<f64>,
    pub emr: Option<f64>,
    /// Per-position partial credit; supplementary to `sma`.
    pub sma_partial: Option<f64>,
    pub counts: Counts,
    pub cases: Vec<CaseReport>,
    pub load_diagnostics: Vec<LoadDiagnostic>,
    pub candidate_diagnostics: Vec<LoadDiagnostic>,
    /// Candidate rows whose case_id matches no loaded case.
    pub unknown_candidates: Vec<String>,
}

impl MetricsReport {
    pub fn from_cases(
        mode: &str,
        cases: Vec<CaseReport>,
        load_diagnostics: Vec<LoadDiagnostic>,
        candidate_diagnostics: Vec<LoadDiagnostic>,
        unknown_candidates: Vec<String>,
    ) -> Self {
        let mut c = Counts {
            cases_loaded: cases.len(),
            ..Counts::default()
        };
        for r in &cases {
            if r.status == CaseStatus::Voided {
                c.cases_voided += 1;
                continue;
            }
            c.cases_scored += 1;
            c.candidates_missing += usize::from(r.candidate_missing);
            c.sma_hits += r.sma as usize;
            c.esr_hits += r.esr as usize;
            c.assertions_total += r.assertions_total;
            c.assertions_satisfied += r.assertions_satisfied;
            c.sma_partial_hits += r.sma_partial[0];
            c.sma_partial_total += r.sma_partial[1];
        }
        MetricsReport {
            mode: mode.to_string(),
            sma: ratio(c.sma_hits, c.cases_scored),
            esr: ratio(c.esr_hits, c.cases_scored),
            emr: ratio(c.assertions_satisfied, c.assertions_total),
            sma_partial: ratio(c.sma_partial_hits, c.sma_partial_total),
            counts: c,
            cases,
            load_diagnostics,
            candidate_diagnostics,
            unknown_candidates,
        }
    }

    /// Sorted-key compact JSON; identical inputs give identical bytes.
    pub fn to_canonical_json(&self) -> String {
        canonical_json(&serde_json::to_value(self).expect("report serializes"))
    }

    pub fn to_table(&self) -> String {
        let fmt = |m: Option<f64>| m.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
        let c = &self.counts;
        let mut out = String::new();
        out.push_str(&format!(
            "{:<28} {:>4} {:>4} {:>9}  {}\n",
            "case", "SMA", "ESR", "EMR", "note"
        ));
        for r in &self.cases {
            let note = match (&r.void_reason, r.candidate_missing) {
                (Some(reason), _) => format!("voided: {reason}"),
                (None, true) => "candidate missing".to_string(),
                _ => String::new(),
            };
            let (sma, esr) = match r.status {
                CaseStatus::Scored => (r.sma.to_string(), r.esr.to_string()),
                CaseStatus::Voided => ("-".into(), "-".into()),
            };
            out.push_str(&format!(
                "{:<28} {:>4} {:>4} {:>9}  {}\n",
                r.case_id,
                sma,
                esr,
                format!("{}/{}", r.assertions_satisfied, r.assertions_total),
                note
            ));
        }
        out.push_str(&format!(
            "\nSMA {} ({}/{})  ESR {} ({}/{})  EMR {} ({}/{})\n",
            fmt(self.sma),
            c.sma_hits,
            c.cases_scored,
            fmt(self.esr),
            c.esr_hits,
            c.cases_scored,
            fmt(self.emr),
            c.assertions_satisfied,
            c.assertions_total
        ));
        out.push_str(&format!(
            "SMA per-op partial (supplementary) {} ({}/{})\n",
            fmt(self.sma_partial),
            c.sma_partial_hits,
            c.sma_partial_total
        ));
        if c.cases_voided > 0 {
            out.push_str(&format!("voided cases: {}\n", c.cases_voided));
        }
        out
    }
}
