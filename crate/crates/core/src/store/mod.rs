//! Reference relational backend on SQLite.
//!
//! Every op runs inside one transaction: expiry sweep, then the op itself,
//! then the audit append. Errors and dry runs roll the whole transaction
//! back, so the content digest is unchanged in both cases.

mod db;
mod exec;
pub mod item;
pub mod score;

use std::path::Path;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use rusqlite::Connection;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::schema::OpKind;
use crate::services::{ModelServices, ServiceError, StubServices};
use crate::typed::TypedOp;
use crate::validate::Diagnostic;

pub use db::{EdgeKind, DIGEST_TABLES};
pub use exec::ENTITY_FACETS;
pub use item::{
    AuditRecord, Expiry, Lineage, LockRecord, MemoryItem, StoreSnapshot, TriggerKind, TriggerRow,
    ARCHIVED_FACET, DEFAULT_WEIGHT, SPLIT_FACET,
};
pub use score::{lexical_overlap, score_item, ScoreWeights};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecError {
    #[error("unknown ids: {}", .0.join(", "))]
    UnknownId(Vec<String>),
    #[error("item {0} is deleted")]
    DeletedItem(String),
    #[error("item {id} is locked ({mode}); {op} refused")]
    LockedItem {
        id: String,
        mode: String,
        op: OpKind,
    },
    #[error("item {0} is past its expiry")]
    ExpiredItem(String),
    #[error("update sets no fields")]
    EmptyPatch,
    #[error("merge needs at least two sources, got {0}")]
    TooFewSources(usize),
    #[error("split needs exactly one source item, got {0}")]
    SplitArity(usize),
    #[error("item {0} yields fewer than two parts")]
    NotSplittable(String),
    #[error("item {id} is already locked ({mode})")]
    AlreadyLocked { id: String, mode: String },
    #[error("target resolved to no items")]
    EmptyTarget,
    #[error("{0} requires a target")]
    MissingTarget(OpKind),
    #[error("model service: {0}")]
    Service(#[from] ServiceError),
    #[error("no store initialized at {0}")]
    NotInitialized(String),
    #[error("storage: {0}")]
    Storage(String),
}

impl From<rusqlite::Error> for ExecError {
    fn from(e: rusqlite::Error) -> Self {
        ExecError::Storage(e.to_string())
    }
}

impl ExecError {
    pub fn code(&self) -> &'static str {
        match self {
            ExecError::UnknownId(_) => "E_UNKNOWN_ID",
            ExecError::DeletedItem(_) => "E_DELETED_ITEM",
            ExecError::LockedItem { .. } => "E_LOCKED",
            ExecError::ExpiredItem(_) => "E_EXPIRED",
            ExecError::EmptyPatch => "E_EMPTY_SET",
            ExecError::TooFewSources(_) => "E_TOO_FEW_SOURCES",
            ExecError::SplitArity(_) => "E_SPLIT_ARITY",
            ExecError::NotSplittable(_) => "E_NOT_SPLITTABLE",
            ExecError::AlreadyLocked { .. } => "E_ALREADY_LOCKED",
            ExecError::EmptyTarget => "E_EMPTY_TARGET",
            ExecError::MissingTarget(_) => "E_MISSING_TARGET",
            ExecError::Service(_) => "E_SERVICE",
            ExecError::NotInitialized(_) => "E_INIT_REQUIRED",
            ExecError::Storage(_) => "E_STORAGE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreConfig {
    pub score_weights: ScoreWeights,
    /// Search candidates with no lexical overlap need at least this cosine.
    pub min_similarity: f64,
    /// Weight an item is lowered to by the `demote` expiry action.
    pub expiry_demote_weight: f64,
}

impl Default for StoreConfig {
    fn default() -> Self {
        StoreConfig {
            score_weights: ScoreWeights::default(),
            min_similarity: 0.5,
            expiry_demote_weight: 0.1,
        }
    }
}

/// Effects of one successfully executed op.
#[derive(Debug, Clone, PartialEq)]
pub struct Applied {
    pub affected_ids: Vec<String>,
    pub count_delta: i64,
    pub payload: Value,
    pub warnings: Vec<Diagnostic>,
    /// Items whose expiry action the sweep applied before the op ran.
    pub swept: Vec<String>,
}

pub struct MemoryStore {
    conn: Connection,
    services: Arc<dyn ModelServices>,
    config: StoreConfig,
}

impl std::fmt::Debug for MemoryStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MemoryStore")
            .field("services", &self.services.descriptor())
            .field("config", &self.config)
            .finish()
    }
}

impl MemoryStore {
    fn from_conn(conn: Connection) -> Result<Self, ExecError> {
        conn.execute_batch(db::DDL)?;
        Ok(MemoryStore {
            conn,
            services: Arc::new(StubServices::default()),
            config: StoreConfig::default(),
        })
    }

    pub fn in_memory() -> Result<Self, ExecError> {
        Self::from_conn(Connection::open_in_memory()?)
    }

    /// Opens the database file, creating it and its tables if needed.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, ExecError> {
        Self::from_conn(Connection::open(path)?)
    }

    /// Opens a database previously created by [`MemoryStore::open`].
    pub fn open_existing(path: impl AsRef<Path>) -> Result<Self, ExecError> {
        let p = path.as_ref();
        let missing = || ExecError::NotInitialized(p.display().to_string());
        if !p.exists() {
            return Err(missing());
        }
        let conn = Connection::open_with_flags(p, rusqlite::OpenFlags::SQLITE_OPEN_READ_WRITE)?;
        if !db::has_table(&conn, "memory_items")? {
            return Err(missing());
        }
        Self::from_conn(conn)
    }

    pub fn with_services(mut self, services: Arc<dyn ModelServices>) -> Self {
        self.services = services;
        self
    }

    pub fn with_config(mut self, config: StoreConfig) -> Self {
        self.config = config;
        self
    }

    pub fn services(&self) -> &dyn ModelServices {
        self.services.as_ref()
    }

    pub fn config(&self) -> &StoreConfig {
        &self.config
    }

    /// Runs one typed op at clock `now`. Nothing is persisted when the op
    /// fails or `dry_run` is set; the returned effects are still those the
    /// op would have had.
    pub fn run(
        &mut self,
        op: &TypedOp,
        now: DateTime<Utc>,
        dry_run: bool,
    ) -> Result<Applied, ExecError> {
        let services = Arc::clone(&self.services);
        let tx = self.conn.transaction()?;
        let before = db::digest(&tx)?;
        let swept = exec::sweep(&tx, &now, &self.config)?;
        let active_before = exec::active_count(&tx)?;
        let mut ctx = exec::Ctx::load(
            &tx,
            services.as_ref(),
            &self.config,
            now,
            op.meta.actor.clone(),
        )?;
        let out = exec::execute(&mut ctx, op)?;
        let count_delta = exec::active_count(&tx)? - active_before;
        if dry_run {
            tx.rollback()?;
        } else {
            let after = db::digest(&tx)?;
            db::append_audit(
                &tx,
                op.meta.actor.as_deref(),
                op.op,
                &out.affected_ids,
                &before,
                &after,
                &now,
            )?;
            tx.commit()?;
        }
        Ok(Applied {
            affected_ids: out.affected_ids,
            count_delta,
            payload: out.payload,
            warnings: out.warnings,
            swept,
        })
    }

    /// Content digest over every table; see the `db` module for the layout.
    pub fn digest(&self) -> Result<String, ExecError> {
        Ok(db::digest(&self.conn)?)
    }

    pub fn items(&self) -> Result<Vec<MemoryItem>, ExecError> {
        Ok(db::load_items(&self.conn)?)
    }

    pub fn get(&self, id: &str) -> Result<Option<MemoryItem>, ExecError> {
        Ok(self.items()?.into_iter().find(|i| i.id == id))
    }

    pub fn triggers(&self) -> Result<Vec<TriggerRow>, ExecError> {
        Ok(db::load_triggers(&self.conn)?)
    }

    pub fn audit(&self) -> Result<Vec<AuditRecord>, ExecError> {
        Ok(db::load_audit(&self.conn)?)
    }

    /// The audit log as JSON Lines, one canonical record per line.
    pub fn export_audit_jsonl(&self) -> Result<String, ExecError> {
        let mut out = String::new();
        for rec in self.audit()? {
            let v = serde_json::to_value(&rec).expect("audit record serializes");
            out.push_str(&crate::schema::canonical_json(&v));
            out.push('\n');
        }
        Ok(out)
    }

    pub fn snapshot(&self) -> Result<StoreSnapshot, ExecError> {
        Ok(StoreSnapshot {
            items: self
                .items()?
                .into_iter()
                .map(|i| (i.id.clone(), i))
                .collect(),
            triggers: self.triggers()?,
            audit_len: db::audit_len(&self.conn)?,
        })
    }

    /// Runs an arbitrary read-only SQL query returning one scalar, for
    /// bench assertions written directly against the tables.
    pub fn query_scalar(&self, sql: &str) -> Result<Value, ExecError> {
        let mut stmt = self.conn.prepare(sql)?;
        if !stmt.readonly() {
            return Err(ExecError::Storage(
                "only read-only queries are allowed".into(),
            ));
        }
        let v = stmt.query_row([], |r| r.get::<_, rusqlite::types::Value>(0))?;
        Ok(match v {
            rusqlite::types::Value::Null => Value::Null,
            rusqlite::types::Value::Integer(i) => Value::from(i),
            rusqlite::types::Value::Real(f) => Value::from(f),
            rusqlite::types::Value::Text(t) => Value::String(t),
            rusqlite::types::Value::Blob(_) => Value::String("<blob>".into()),
        })
    }
}

#[cfg(test)]
mod tests;
