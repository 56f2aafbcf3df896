//! Backend contract and dispatch.
//!
//! [`dispatch`] enforces the runtime confirmation gate and the backend's
//! capability set, then hands the op to [`Backend::execute`]; every outcome
//! is reported as an [`ExecutionResult`].

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::schema::{canonical_json, decode_value, DeleteMode, OpKind, Stage};
use crate::services::ModelServices;
use crate::store::{ExecError, MemoryStore, StoreSnapshot};
use crate::typed::{parse, ResolvedTarget, TypedArgs, TypedOp};
use crate::validate::{validate, Diagnostic};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Error,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub status: Status,
    pub op: Option<OpKind>,
    pub affected_ids: Vec<String>,
    pub count_delta: i64,
    pub payload: Value,
    pub diagnostics: Vec<Diagnostic>,
    pub dry_run: bool,
}

impl ExecutionResult {
    pub fn error(op: Option<OpKind>, diagnostics: Vec<Diagnostic>, dry_run: bool) -> Self {
        ExecutionResult {
            status: Status::Error,
            op,
            affected_ids: Vec::new(),
            count_delta: 0,
            payload: Value::Null,
            diagnostics,
            dry_run,
        }
    }

    pub fn skipped(op: Option<OpKind>) -> Self {
        ExecutionResult {
            status: Status::Skipped,
            ..ExecutionResult::error(op, Vec::new(), false)
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == Status::Ok
    }

    pub fn codes(&self) -> Vec<&str> {
        self.diagnostics.iter().map(|d| d.code.as_str()).collect()
    }

    /// Sorted-key compact JSON; byte-identical for identical results.
    pub fn to_canonical_json(&self) -> String {
        canonical_json(&serde_json::to_value(self).expect("result serializes"))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdapterError {
    #[error("backend does not support {0}")]
    UnsupportedOp(OpKind),
    #[error("{op} {reason} requires confirmation")]
    ConfirmationRequired { op: OpKind, reason: &'static str },
}

impl AdapterError {
    pub fn code(&self) -> &'static str {
        match self {
            AdapterError::UnsupportedOp(_) => "E_UNSUPPORTED_OP",
            AdapterError::ConfirmationRequired { .. } => "E_CONFIRMATION_REQUIRED",
        }
    }

    fn diagnostic(&self) -> Diagnostic {
        Diagnostic::new(self.code(), "/meta", "runtime", self.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecContext {
    pub now: DateTime<Utc>,
    pub dry_run: bool,
}

pub trait Backend {
    fn name(&self) -> &str;
    fn supports(&self, op: OpKind) -> bool;
    /// Runs one op; on error or dry run the backend state must be unchanged.
    fn execute(&mut self, op: &TypedOp, ctx: &ExecContext) -> ExecutionResult;
    fn snapshot_digest(&self) -> Result<String, ExecError>;
    fn snapshot(&self) -> Result<StoreSnapshot, ExecError>;
    fn services(&self) -> &dyn ModelServices;
    /// Read-only scalar SQL query, for backends that have one.
    fn query_scalar(&self, _sql: &str) -> Result<Value, ExecError> {
        Err(ExecError::Storage(format!(
            "{} does not support SQL queries",
            self.name()
        )))
    }
}

pub fn exec_diagnostic(e: &ExecError) -> Diagnostic {
    Diagnostic::new(e.code(), "", "runtime", e.to_string())
}

impl Backend for MemoryStore {
    fn name(&self) -> &str {
        "sqlite"
    }

    fn supports(&self, _op: OpKind) -> bool {
        true
    }

    fn execute(&mut self, op: &TypedOp, ctx: &ExecContext) -> ExecutionResult {
        match self.run(op, ctx.now, ctx.dry_run) {
            Ok(a) => ExecutionResult {
                status: Status::Ok,
                op: Some(op.op),
                affected_ids: a.affected_ids,
                count_delta: a.count_delta,
                payload: a.payload,
                diagnostics: a.warnings,
                dry_run: ctx.dry_run,
            },
            Err(e) => ExecutionResult::error(Some(op.op), vec![exec_diagnostic(&e)], ctx.dry_run),
        }
    }

    fn snapshot_digest(&self) -> Result<String, ExecError> {
        self.digest()
    }

    fn snapshot(&self) -> Result<StoreSnapshot, ExecError> {
        MemoryStore::snapshot(self)
    }

    fn services(&self) -> &dyn ModelServices {
        MemoryStore::services(self)
    }

    fn query_scalar(&self, sql: &str) -> Result<Value, ExecError> {
        MemoryStore::query_scalar(self, sql)
    }
}

/// Re-checks the wide-scope and hard-delete confirmation rules against the
/// flags the op carries at execution time.
pub fn confirmation_gate(op: &TypedOp) -> Result<(), AdapterError> {
    let all = matches!(op.target, Some(ResolvedTarget::All));
    let (confirmed, dry) = (op.meta.confirmation, op.meta.dry_run);
    if all && op.stage == Stage::Ret && !confirmed {
        return Err(AdapterError::ConfirmationRequired {
            op: op.op,
            reason: "over the whole store",
        });
    }
    if all && op.stage != Stage::Ret && !(confirmed || dry) {
        return Err(AdapterError::ConfirmationRequired {
            op: op.op,
            reason: "over the whole store",
        });
    }
    if matches!(
        op.args,
        TypedArgs::Delete {
            mode: DeleteMode::Hard
        }
    ) && !(confirmed || dry)
    {
        return Err(AdapterError::ConfirmationRequired {
            op: op.op,
            reason: "in hard mode",
        });
    }
    Ok(())
}

pub fn dispatch(backend: &mut dyn Backend, op: &TypedOp, now: DateTime<Utc>) -> ExecutionResult {
    let dry_run = op.meta.dry_run;
    if !backend.supports(op.op) {
        let e = AdapterError::UnsupportedOp(op.op);
        return ExecutionResult::error(Some(op.op), vec![e.diagnostic()], dry_run);
    }
    if let Err(e) = confirmation_gate(op) {
        return ExecutionResult::error(Some(op.op), vec![e.diagnostic()], dry_run);
    }
    backend.execute(op, &ExecContext { now, dry_run })
}

/// Executes ops in order; after the first error the rest are skipped.
pub fn run_sequence(
    backend: &mut dyn Backend,
    ops: &[TypedOp],
    now: DateTime<Utc>,
) -> Vec<ExecutionResult> {
    let mut failed = false;
    ops.iter()
        .map(|op| {
            if failed {
                return ExecutionResult::skipped(Some(op.op));
            }
            let r = dispatch(backend, op, now);
            failed = !r.is_ok();
            r
        })
        .collect()
}

/// Forces `meta.dry_run` on before parsing, for callers with a runtime
/// dry-run switch.
pub fn with_dry_run(mut value: Value) -> Value {
    if let Value::Object(m) = &mut value {
        let meta = m
            .entry("meta")
            .or_insert_with(|| Value::Object(Default::default()));
        if let Value::Object(meta) = meta {
            meta.insert("dry_run".into(), Value::Bool(true));
        }
    }
    value
}

/// Full pipeline for one raw instance: decode, validate, parse, dispatch.
/// `now` is both the execution clock and the reference for relative times.
pub fn execute_value(
    backend: &mut dyn Backend,
    value: &Value,
    now: DateTime<Utc>,
) -> ExecutionResult {
    let raw_op = value
        .get("op")
        .and_then(Value::as_str)
        .and_then(|s| s.parse().ok());
    let dry = value
        .pointer("/meta/dry_run")
        .and_then(Value::as_bool)
        .unwrap_or(false);
    let inst = match decode_value(value) {
        Ok(i) => i,
        Err(e) => {
            let d = Diagnostic::new(e.code(), e.path(), "decode", e.to_string());
            return ExecutionResult::error(raw_op, vec![d], dry);
        }
    };
    let report = validate(&inst);
    if !report.ok {
        return ExecutionResult::error(Some(inst.op()), report.diagnostics, dry);
    }
    match parse(&inst, Some(now)) {
        Ok(op) => dispatch(backend, &op, now),
        Err(e) => {
            let d = Diagnostic::new(e.code(), "", "parse", e.to_string());
            ExecutionResult::error(Some(inst.op()), vec![d], dry)
        }
    }
}

/// [`execute_value`] over a list with fail-stop semantics.
pub fn run_values(
    backend: &mut dyn Backend,
    values: &[Value],
    now: DateTime<Utc>,
) -> Vec<ExecutionResult> {
    let mut failed = false;
    values
        .iter()
        .map(|v| {
            if failed {
                let op = v
                    .get("op")
                    .and_then(Value::as_str)
                    .and_then(|s| s.parse().ok());
                return ExecutionResult::skipped(op);
            }
            let r = execute_value(backend, v, now);
            failed = !r.is_ok();
            r
        })
        .collect()
}
