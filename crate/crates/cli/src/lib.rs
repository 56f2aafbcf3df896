//! Command implementations behind the `memop` binary. Each command writes
//! its machine output to the supplied writer and returns the exit status.

use std::io::{BufRead, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use memop_bench::{
    load_candidates, load_cases, run_bench, store_factory, BenchConfig, BenchError, MetricsReport,
};
use memop_core::adapter::{execute_value, with_dry_run, Backend, ExecutionResult};
use memop_core::schema::{canonical_json, decode_value, parse_utc, DecodeError};
use memop_core::services::{HttpServices, ModelServices, StubServices};
use memop_core::store::{ExecError, MemoryStore, ScoreWeights, StoreConfig};
use memop_core::validate::{validate, Diagnostic, ValidationReport};
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Success = 0,
    Failure = 1,
    Infra = 2,
}

impl Exit {
    fn from_ok(ok: bool) -> Self {
        if ok {
            Exit::Success
        } else {
            Exit::Failure
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Io(String),
    #[error("store at {0} is not initialized; run `memop init` first")]
    InitRequired(String),
    #[error("--db is required")]
    MissingDb,
    #[error(transparent)]
    Store(#[from] ExecError),
    #[error(transparent)]
    Bench(#[from] BenchError),
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Io(_) => "E_IO",
            CliError::InitRequired(_) => "E_INIT_REQUIRED",
            CliError::MissingDb => "E_USAGE",
            CliError::Store(e) => e.code(),
            CliError::Bench(e) => e.code(),
        }
    }

    pub fn to_json(&self) -> String {
        canonical_json(&json!({ "code": self.code(), "message": self.to_string() }))
    }
}

fn io_err(ctx: impl std::fmt::Display, e: std::io::Error) -> CliError {
    CliError::Io(format!("{ctx}: {e}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Json,
    Table,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub db_path: Option<PathBuf>,
    pub clock: Option<DateTime<Utc>>,
    pub services_url: Option<String>,
    pub format: Format,
    pub dry_run: bool,
    pub tau: f64,
    pub score_weights: ScoreWeights,
    pub embedding_dim: usize,
}

impl Default for CliConfig {
    fn default() -> Self {
        CliConfig {
            db_path: None,
            clock: None,
            services_url: None,
            format: Format::Json,
            dry_run: false,
            tau: memop_bench::DEFAULT_TAU,
            score_weights: ScoreWeights::default(),
            embedding_dim: 64,
        }
    }
}

impl CliConfig {
    pub fn services(&self) -> Arc<dyn ModelServices> {
        match &self.services_url {
            Some(url) => Arc::new(HttpServices::new(url.clone(), self.embedding_dim)),
            None => Arc::new(StubServices::new(self.embedding_dim)),
        }
    }

    pub fn store_config(&self) -> StoreConfig {
        StoreConfig {
            score_weights: self.score_weights,
            ..StoreConfig::default()
        }
    }

    fn now(&self) -> DateTime<Utc> {
        self.clock.unwrap_or_else(Utc::now)
    }

    fn db(&self) -> Result<&Path, CliError> {
        self.db_path.as_deref().ok_or(CliError::MissingDb)
    }

    pub fn open_store(&self) -> Result<MemoryStore, CliError> {
        let path = self.db()?;
        let store = MemoryStore::open_existing(path).map_err(|e| match e {
            ExecError::NotInitialized(_) => CliError::InitRequired(path.display().to_string()),
            other => CliError::Store(other),
        })?;
        Ok(store
            .with_services(self.services())
            .with_config(self.store_config()))
    }
}

pub fn parse_clock(s: &str) -> Result<DateTime<Utc>, String> {
    parse_utc(s).map_err(|e| e.to_string())
}

pub fn parse_score_weights(s: &str) -> Result<ScoreWeights, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match parts.as_slice() {
        [e, l, w] if parts.iter().all(|x| x.is_finite() && *x >= 0.0) && e + l + w > 0.0 => {
            Ok(ScoreWeights {
                embedding: *e,
                lexical: *l,
                weight: *w,
            })
        }
        _ => Err("expected three non-negative numbers embedding,lexical,weight".into()),
    }
}

/// Reads a file, or stdin for `None` and `-`.
pub fn read_input(path: Option<&Path>) -> Result<String, CliError> {
    match path {
        Some(p) if p != Path::new("-") => {
            std::fs::read_to_string(p).map_err(|e| io_err(p.display(), e))
        }
        _ => {
            let mut s = String::new();
            std::io::stdin()
                .read_to_string(&mut s)
                .map_err(|e| io_err("stdin", e))?;
            Ok(s)
        }
    }
}

/// Splits input into JSON entries: a single (possibly multi-line) document,
/// or a JSONL stream where each malformed line is kept as its parse error.
pub fn split_entries(text: &str) -> Vec<Result<Value, String>> {
    let stream: Result<Vec<Value>, _> = serde_json::Deserializer::from_str(text)
        .into_iter::<Value>()
        .collect();
    if let Ok(values) = stream {
        return values.into_iter().map(Ok).collect();
    }
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str::<Value>(l).map_err(|e| e.to_string()))
        .collect()
}

fn malformed(message: String) -> Diagnostic {
    let e = DecodeError::MalformedJson(message);
    Diagnostic::new(e.code(), "", "decode", e.to_string())
}

fn validate_value(v: &Value) -> ValidationReport {
    match decode_value(v) {
        Ok(inst) => validate(&inst),
        Err(e) => ValidationReport {
            ok: false,
            diagnostics: vec![Diagnostic::new(e.code(), e.path(), "decode", e.to_string())],
        },
    }
}

fn write_line(out: &mut dyn Write, s: &str) -> Result<(), CliError> {
    writeln!(out, "{s}").map_err(|e| io_err("output", e))
}

pub fn cmd_init(cfg: &CliConfig, out: &mut dyn Write) -> Result<Exit, CliError> {
    let path = cfg.db()?;
    let store = MemoryStore::open(path)?;
    let line =
        canonical_json(&json!({ "db": path.display().to_string(), "digest": store.digest()? }));
    write_line(out, &line)?;
    Ok(Exit::Success)
}

/// Validates every entry; exit 0 iff all are accepted.
pub fn cmd_validate(cfg: &CliConfig, text: &str, out: &mut dyn Write) -> Result<Exit, CliError> {
    let mut all_ok = true;
    for (index, entry) in split_entries(text).into_iter().enumerate() {
        let report = match entry {
            Ok(v) => validate_value(&v),
            Err(m) => ValidationReport {
                ok: false,
                diagnostics: vec![malformed(m)],
            },
        };
        all_ok &= report.ok;
        match cfg.format {
            Format::Json => {
                let v =
                    json!({ "index": index, "ok": report.ok, "diagnostics": report.diagnostics });
                write_line(out, &canonical_json(&v))?;
            }
            Format::Table => {
                write_line(
                    out,
                    &format!("#{index} {}", if report.ok { "ok" } else { "rejected" }),
                )?;
                for d in &report.diagnostics {
                    write_line(
                        out,
                        &format!("  {} {} [{}] {}", d.code, d.path, d.rule, d.message),
                    )?;
                }
            }
        }
    }
    Ok(Exit::from_ok(all_ok))
}

fn skipped_op(entry: &Result<Value, String>) -> ExecutionResult {
    let op = entry
        .as_ref()
        .ok()
        .and_then(|v| v.get("op"))
        .and_then(Value::as_str)
        .and_then(|s| s.parse().ok());
    ExecutionResult::skipped(op)
}

fn run_entry(
    cfg: &CliConfig,
    backend: &mut dyn Backend,
    entry: &Result<Value, String>,
) -> ExecutionResult {
    match entry {
        Ok(v) => {
            let v = if cfg.dry_run {
                with_dry_run(v.clone())
            } else {
                v.clone()
            };
            execute_value(backend, &v, cfg.now())
        }
        Err(m) => ExecutionResult::error(None, vec![malformed(m.clone())], cfg.dry_run),
    }
}

fn print_result(
    cfg: &CliConfig,
    out: &mut dyn Write,
    index: usize,
    r: &ExecutionResult,
) -> Result<(), CliError> {
    match cfg.format {
        Format::Json => write_line(out, &r.to_canonical_json()),
        Format::Table => {
            let op = r.op.map_or("-".to_string(), |o| o.to_string());
            let status = serde_json::to_value(r.status).expect("status serializes");
            let status = status.as_str().unwrap_or_default();
            write_line(
                out,
                &format!(
                    "#{index} {op:<9} {status:<7} ids=[{}] delta={}{}",
                    r.affected_ids.join(","),
                    r.count_delta,
                    if r.dry_run { " (dry run)" } else { "" }
                ),
            )?;
            for d in &r.diagnostics {
                write_line(out, &format!("  {} {}", d.code, d.message))?;
            }
            Ok(())
        }
    }
}

/// Runs every entry through the full pipeline against the store at
/// `cfg.db_path`; after the first failure the remaining entries are skipped.
pub fn cmd_exec(cfg: &CliConfig, text: &str, out: &mut dyn Write) -> Result<Exit, CliError> {
    let mut store = cfg.open_store()?;
    let mut failed = false;
    for (index, entry) in split_entries(text).iter().enumerate() {
        let r = if failed {
            skipped_op(entry)
        } else {
            run_entry(cfg, &mut store, entry)
        };
        failed |= !r.is_ok();
        print_result(cfg, out, index, &r)?;
    }
    Ok(Exit::from_ok(!failed))
}

/// Scores a case file against its own gold lists, or against a candidate
/// file when one is given. The canonical JSON report is also written to
/// `report_path` when set.
pub fn cmd_bench(
    cfg: &CliConfig,
    cases_path: &Path,
    candidates_path: Option<&Path>,
    report_path: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(MetricsReport, Exit), CliError> {
    let loaded = load_cases(cases_path)?;
    let (candidates, cand_diags) = match candidates_path {
        Some(p) => {
            let (c, d) = load_candidates(p)?;
            (Some(c), d)
        }
        None => (None, Vec::new()),
    };
    let factory = store_factory(cfg.services(), cfg.store_config());
    let bench_cfg = BenchConfig {
        tau: cfg.tau,
        clock: cfg.clock,
    };
    let report = run_bench(
        &loaded.cases,
        candidates.as_deref(),
        &factory,
        &bench_cfg,
        loaded.diagnostics,
        cand_diags,
    )?;
    let json = report.to_canonical_json();
    if let Some(p) = report_path {
        std::fs::write(p, format!("{json}\n")).map_err(|e| io_err(p.display(), e))?;
    }
    match cfg.format {
        Format::Json => write_line(out, &json)?,
        Format::Table => out
            .write_all(report.to_table().as_bytes())
            .map_err(|e| io_err("output", e))?,
    }
    let c = &report.counts;
    let perfect = c.sma_hits == c.cases_scored
        && c.esr_hits == c.cases_scored
        && c.assertions_satisfied == c.assertions_total;
    Ok((report, Exit::from_ok(perfect)))
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("value serializes")
}

/// Interactive loop: one JSON instance per entry (an entry may span lines
/// until the object is complete), plus `.inspect <id>`, `.digest`, `.quit`.
pub fn cmd_repl(
    cfg: &CliConfig,
    input: &mut dyn BufRead,
    out: &mut dyn Write,
    prompt: bool,
) -> Result<Exit, CliError> {
    let mut store = cfg.open_store()?;
    let mut pending = String::new();
    let mut line = String::new();
    loop {
        if prompt {
            let p = if pending.is_empty() {
                "memop> "
            } else {
                "  ...> "
            };
            write!(out, "{p}")
                .and_then(|_| out.flush())
                .map_err(|e| io_err("output", e))?;
        }
        line.clear();
        if input.read_line(&mut line).map_err(|e| io_err("input", e))? == 0 {
            break;
        }
        let trimmed = line.trim();
        if pending.is_empty() {
            if trimmed.is_empty() {
                continue;
            }
            if trimmed == ".quit" || trimmed == ".exit" {
                break;
            }
            if trimmed == ".digest" {
                match store.digest() {
                    Ok(d) => write_line(out, &d)?,
                    Err(e) => write_line(out, &format!("error {}: {e}", e.code()))?,
                }
                continue;
            }
            if let Some(id) = trimmed.strip_prefix(".inspect") {
                let id = id.trim();
                match store.get(id) {
                    Ok(Some(item)) => {
                        let snap = store.snapshot()?;
                        let triggers: Vec<_> = snap.triggers_for(id).cloned().collect();
                        let v = json!({ "item": item, "triggers": triggers });
                        write_line(out, &pretty(&v))?;
                    }
                    Ok(None) => write_line(out, &format!("no item with id {id:?}"))?,
                    Err(e) => write_line(out, &format!("error {}: {e}", e.code()))?,
                }
                continue;
            }
            if trimmed.starts_with('.') {
                write_line(
                    out,
                    &format!("unknown command {trimmed}; try .inspect <id>, .digest, .quit"),
                )?;
                continue;
            }
        }
        pending.push_str(&line);
        let entry = match serde_json::from_str::<Value>(&pending) {
            Ok(v) => Ok(v),
            Err(e) if e.is_eof() && !trimmed.is_empty() => continue,
            Err(e) => Err(e.to_string()),
        };
        pending.clear();
        let r = run_entry(cfg, &mut store, &entry);
        let v = serde_json::to_value(&r).expect("result serializes");
        match cfg.format {
            Format::Json => write_line(out, &pretty(&v))?,
            Format::Table => print_result(cfg, out, 0, &r)?,
        }
    }
    Ok(Exit::Success)
}
