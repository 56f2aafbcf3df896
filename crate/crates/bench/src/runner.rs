use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use memop_core::adapter::{execute_value, Backend, ExecutionResult, Status};
use memop_core::schema::{decode_value, encode_instance};
use memop_core::services::{ModelServices, StubServices};
use memop_core::store::{MemoryStore, StoreConfig, StoreSnapshot};
use memop_core::typed::parse;
use serde_json::Value;

use crate::assertion::{bind_assertions, bound_targets, Assertion, EvalInput, DEFAULT_TAU};
use crate::case::{BenchCase, Candidate, LoadDiagnostic};
use crate::report::{AssertionOutcome, CaseReport, CaseStatus, MetricsReport, OpSummary};
use crate::BenchError;

pub type BackendFactory<'a> = dyn Fn() -> Result<Box<dyn Backend>, BenchError> + 'a;

/// Fresh in-memory reference stores sharing one service implementation.
pub fn store_factory(
    services: Arc<dyn ModelServices>,
    config: StoreConfig,
) -> impl Fn() -> Result<Box<dyn Backend>, BenchError> {
    move || {
        let store = MemoryStore::in_memory()
            .map_err(|e| BenchError::Backend(e.to_string()))?
            .with_services(services.clone())
            .with_config(config.clone());
        Ok(Box::new(store) as Box<dyn Backend>)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchConfig {
    pub tau: f64,
    /// Replaces every case's own clock when set.
    pub clock: Option<DateTime<Utc>>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            tau: DEFAULT_TAU,
            clock: None,
        }
    }
}

impl BenchConfig {
    fn clock_for(&self, case: &BenchCase) -> DateTime<Utc> {
        self.clock.unwrap_or_else(|| case.clock())
    }
}

fn backend_err(e: impl ToString) -> BenchError {
    BenchError::Backend(e.to_string())
}

fn codes(r: &ExecutionResult) -> String {
    r.codes().join(",")
}

pub fn setup_scenario(
    case: &BenchCase,
    backend: &mut dyn Backend,
    now: DateTime<Utc>,
) -> Result<(), BenchError> {
    for (index, v) in case.prerequisites.iter().enumerate() {
        let r = execute_value(backend, v, now);
        if !r.is_ok() {
            return Err(BenchError::SetupFailed {
                index,
                codes: codes(&r),
            });
        }
    }
    Ok(())
}

fn canonical(v: &Value) -> Option<String> {
    decode_value(v).ok().map(|i| encode_instance(&i))
}

/// Whole-list canonical equality.
pub fn eval_sma(generated: &[Value], gold: &[Value]) -> bool {
    generated.len() == gold.len()
        && generated
            .iter()
            .zip(gold)
            .all(|(g, s)| matches!((canonical(g), canonical(s)), (Some(a), Some(b)) if a == b))
}

/// Matching positions and the longer of the two lengths.
pub fn sma_partial(generated: &[Value], gold: &[Value]) -> [usize; 2] {
    let hits = generated
        .iter()
        .zip(gold)
        .filter(|(g, s)| matches!((canonical(g), canonical(s)), (Some(a), Some(b)) if a == b))
        .count();
    [hits, generated.len().max(gold.len())]
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub results: Vec<ExecutionResult>,
    pub assertions: Vec<AssertionOutcome>,
}

pub fn eval_esr(trace: &RunTrace) -> bool {
    !trace.results.is_empty() && trace.results.iter().all(ExecutionResult::is_ok)
}

fn unsatisfied(a: &Assertion, why: &str) -> AssertionOutcome {
    AssertionOutcome {
        op_index: a.op_index,
        kind: a.check.kind().to_string(),
        satisfied: false,
        detail: Some(serde_json::json!({ "reason": why })),
    }
}

/// Executes `list` fail-stop, evaluating each assertion right after the op
/// it is bound to. Assertions on ops that failed, were skipped or are absent
/// from the list count as unsatisfied.
pub fn run_list(
    backend: &mut dyn Backend,
    list: &[Value],
    expectations: &[Assertion],
    now: DateTime<Utc>,
    tau: f64,
) -> Result<RunTrace, BenchError> {
    let mut by_op: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, a) in expectations.iter().enumerate() {
        by_op.entry(a.op_index).or_default().push(i);
    }
    let mut verdicts: Vec<Option<AssertionOutcome>> = vec![None; expectations.len()];
    let mut results = Vec::with_capacity(list.len());
    let mut failed = false;
    for (index, v) in list.iter().enumerate() {
        if failed {
            let op = v
                .get("op")
                .and_then(Value::as_str)
                .and_then(|s| s.parse().ok());
            results.push(ExecutionResult::skipped(op));
            continue;
        }
        let bound = by_op.get(&index).map(Vec::as_slice).unwrap_or(&[]);
        let before = if bound.is_empty() {
            StoreSnapshot::default()
        } else {
            backend.snapshot().map_err(backend_err)?
        };
        let r = execute_value(backend, v, now);
        failed = !r.is_ok();
        if !bound.is_empty() && r.is_ok() {
            let after = backend.snapshot().map_err(backend_err)?;
            let input = EvalInput {
                before: &before,
                after: &after,
                result: &r,
                backend: &*backend,
                now,
                default_tau: tau,
            };
            for &i in bound {
                let a = &expectations[i];
                let verdict = a.check.evaluate(&input);
                verdicts[i] = Some(AssertionOutcome {
                    op_index: a.op_index,
                    kind: a.check.kind().to_string(),
                    satisfied: verdict.satisfied,
                    detail: verdict.detail,
                });
            }
        }
        results.push(r);
    }
    let assertions = expectations
        .iter()
        .zip(verdicts)
        .map(|(a, v)| {
            v.unwrap_or_else(|| match results.get(a.op_index).map(|r| r.status) {
                None => unsatisfied(a, "op absent"),
                Some(Status::Skipped) => unsatisfied(a, "op skipped"),
                Some(_) => unsatisfied(a, "op failed"),
            })
        })
        .collect();
    Ok(RunTrace {
        results,
        assertions,
    })
}

/// Binds the per-verb templates by replaying the gold list on its scenario.
pub fn derive_expectations(
    case: &BenchCase,
    factory: &BackendFactory<'_>,
    now: DateTime<Utc>,
    tau: f64,
) -> Result<Vec<Assertion>, BenchError> {
    let mut backend = factory()?;
    setup_scenario(case, backend.as_mut(), now)?;
    let mut out = Vec::new();
    for (index, v) in case.schema_list.iter().enumerate() {
        let r = execute_value(backend.as_mut(), v, now);
        if !r.is_ok() {
            return Err(BenchError::GoldFailed {
                index,
                codes: codes(&r),
            });
        }
        let inst = decode_value(v).map_err(|e| BenchError::GoldFailed {
            index,
            codes: e.code().into(),
        })?;
        let op = parse(&inst, Some(now)).map_err(|e| BenchError::GoldFailed {
            index,
            codes: e.code().into(),
        })?;
        out.extend(bind_assertions(index, &op, &bound_targets(op.op, &r), tau));
    }
    Ok(out)
}

fn check_bound(case: &BenchCase, expectations: &[Assertion]) -> Result<(), BenchError> {
    let len = case.schema_list.len();
    match expectations.iter().position(|a| a.op_index >= len) {
        Some(i) => Err(BenchError::UnboundAssertion {
            assertion: i,
            op_index: expectations[i].op_index,
            len,
        }),
        None => Ok(()),
    }
}

fn score_case(
    case: &BenchCase,
    candidate: Option<&[Value]>,
    factory: &BackendFactory<'_>,
    cfg: &BenchConfig,
) -> Result<CaseReport, BenchError> {
    let now = cfg.clock_for(case);
    let expectations = if case.expectations.is_empty() {
        match derive_expectations(case, factory, now, cfg.tau) {
            Ok(e) => e,
            Err(e @ (BenchError::SetupFailed { .. } | BenchError::GoldFailed { .. })) => {
                return Ok(CaseReport::voided(&case.case_id, e.to_string()));
            }
            Err(e) => return Err(e),
        }
    } else {
        case.expectations.clone()
    };
    check_bound(case, &expectations)?;

    let mut backend = factory()?;
    match setup_scenario(case, backend.as_mut(), now) {
        Ok(()) => {}
        Err(e @ BenchError::SetupFailed { .. }) => {
            return Ok(CaseReport::voided(&case.case_id, e.to_string()))
        }
        Err(e) => return Err(e),
    }

    let Some(list) = candidate else {
        let assertions: Vec<AssertionOutcome> = expectations
            .iter()
            .map(|a| unsatisfied(a, "candidate missing"))
            .collect();
        return Ok(CaseReport {
            case_id: case.case_id.clone(),
            status: CaseStatus::Scored,
            void_reason: None,
            candidate_missing: true,
            sma: 0,
            esr: 0,
            sma_partial: [0, case.schema_list.len()],
            assertions_total: assertions.len(),
            assertions_satisfied: 0,
            ops: Vec::new(),
            assertions,
        });
    };

    let trace = run_list(backend.as_mut(), list, &expectations, now, cfg.tau)?;
    let satisfied = trace.assertions.iter().filter(|a| a.satisfied).count();
    Ok(CaseReport {
        case_id: case.case_id.clone(),
        status: CaseStatus::Scored,
        void_reason: None,
        candidate_missing: false,
        sma: u32::from(eval_sma(list, &case.schema_list)),
        esr: u32::from(eval_esr(&trace)),
        sma_partial: sma_partial(list, &case.schema_list),
        assertions_total: trace.assertions.len(),
        assertions_satisfied: satisfied,
        ops: trace
            .results
            .iter()
            .map(|r| OpSummary {
                op: r.op,
                status: r.status,
                codes: r.codes().iter().map(|c| c.to_string()).collect(),
            })
            .collect(),
        assertions: trace.assertions,
    })
}

/// Scores every case on its own fresh backend. Without `candidates` the
/// gold lists are scored against themselves.
pub fn run_bench(
    cases: &[BenchCase],
    candidates: Option<&[Candidate]>,
    factory: &BackendFactory<'_>,
    cfg: &BenchConfig,
    load_diagnostics: Vec<LoadDiagnostic>,
    candidate_diagnostics: Vec<LoadDiagnostic>,
) -> Result<MetricsReport, BenchError> {
    let mut by_id: BTreeMap<&str, &[Value]> = BTreeMap::new();
    let mut candidate_diagnostics = candidate_diagnostics;
    if let Some(cands) = candidates {
        for c in cands {
            if by_id
                .insert(c.case_id.as_str(), c.schema_list.as_slice())
                .is_some()
            {
                candidate_diagnostics.push(LoadDiagnostic {
                    line: 0,
                    message: format!(
                        "duplicate candidate for {}; the last one is used",
                        c.case_id
                    ),
                });
            }
        }
    }
    let known: BTreeSet<&str> = cases.iter().map(|c| c.case_id.as_str()).collect();
    let unknown: Vec<String> = by_id
        .keys()
        .filter(|id| !known.contains(*id))
        .map(|s| s.to_string())
        .collect();

    let mut reports = Vec::with_capacity(cases.len());
    for case in cases {
        let list = match candidates {
            None => Some(case.schema_list.as_slice()),
            Some(_) => by_id.get(case.case_id.as_str()).copied(),
        };
        reports.push(score_case(case, list, factory, cfg)?);
    }
    let mode = if candidates.is_some() {
        "candidate"
    } else {
        "gold"
    };
    Ok(MetricsReport::from_cases(
        mode,
        reports,
        load_diagnostics,
        candidate_diagnostics,
        unknown,
    ))
}

/// A factory over fresh reference stores with the default stub services.
pub fn default_factory() -> impl Fn() -> Result<Box<dyn Backend>, BenchError> {
    store_factory(Arc::new(StubServices::default()), StoreConfig::default())
}
