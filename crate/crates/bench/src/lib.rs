//! Benchmark harness: loads cases, builds each scenario on a blank store,
//! executes gold or candidate schema lists and scores SMA, ESR and EMR.

pub mod assertion;
pub mod case;
pub mod report;
pub mod runner;

pub use assertion::{bind_assertions, bound_targets, Assertion, Check, DEFAULT_TAU};
pub use case::{
    load_candidates, load_cases, parse_candidates, parse_cases, BenchCase, Candidate,
    LoadDiagnostic,
};
pub use report::{CaseReport, CaseStatus, Counts, MetricsReport};
pub use runner::{
    default_factory, derive_expectations, eval_esr, eval_sma, run_bench, run_list, setup_scenario,
    sma_partial, store_factory, BackendFactory, BenchConfig, RunTrace,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BenchError {
    #[error("io: {0}")]
    Io(String),
    #[error("no valid cases ({} rejected)", .0.len())]
    NoValidCases(Vec<LoadDiagnostic>),
    #[error("backend: {0}")]
    Backend(String),
    #[error("prerequisite {index} failed: {codes}")]
    SetupFailed { index: usize, codes: String },
    #[error("gold instance {index} failed: {codes}")]
    GoldFailed { index: usize, codes: String },
    #[error("assertion {assertion} is bound to op {op_index} but the list has {len}")]
    UnboundAssertion {
        assertion: usize,
        op_index: usize,
        len: usize,
    },
}

impl BenchError {
    pub fn code(&self) -> &'static str {
        match self {
            BenchError::Io(_) => "E_IO",
            BenchError::NoValidCases(_) => "E_NO_VALID_CASES",
            BenchError::Backend(_) => "E_BACKEND",
            BenchError::SetupFailed { .. } => "E_SETUP_FAILED",
            BenchError::GoldFailed { .. } => "E_GOLD_FAILED",
            BenchError::UnboundAssertion { .. } => "E_UNBOUND_ASSERTION",
        }
    }
}
