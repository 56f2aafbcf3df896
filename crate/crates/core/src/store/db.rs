//! Row-level access to the SQLite tables.
//!
//! Digest byte layout: for each table in [`DIGEST_TABLES`] order the hasher
//! receives `table:<name>\n`, then one line per row in primary-key order,
//! each line the canonical JSON array of the row's column values in
//! declaration order (integers and reals as JSON numbers, text as strings,
//! NULL as `null`, blobs as lowercase hex strings) followed by `\n`. The
//! digest is the lowercase hex SHA-256 of that stream.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use rusqlite::types::ValueRef;
use rusqlite::{params, Connection, OptionalExtension, Row};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::item::{
    id_seq, AuditRecord, Expiry, Lineage, LockRecord, MemoryItem, TriggerKind, TriggerRow,
};
use crate::schema::{canonical_json, parse_utc, render_utc, LockMode, OnExpire, OpKind};
use crate::typed::PolicySpec;

pub const DDL: &str = "
CREATE TABLE IF NOT EXISTS counters (
    name TEXT PRIMARY KEY,
    value INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS memory_items (
    id INTEGER PRIMARY KEY,
    text TEXT NOT NULL,
    type TEXT NOT NULL,
    tags TEXT NOT NULL,
    facets TEXT NOT NULL,
    weight REAL NOT NULL,
    embedding TEXT,
    time TEXT NOT NULL,
    source TEXT,
    actor TEXT,
    location TEXT,
    expiry_until TEXT,
    on_expire TEXT,
    expiry_applied INTEGER NOT NULL DEFAULT 0,
    deleted INTEGER NOT NULL DEFAULT 0,
    created_at TEXT NOT NULL,
    updated_at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS lineage (
    parent_id INTEGER NOT NULL,
    child_id INTEGER NOT NULL,
    kind TEXT NOT NULL,
    PRIMARY KEY (parent_id, child_id, kind)
);
CREATE TABLE IF NOT EXISTS locks (
    item_id INTEGER PRIMARY KEY,
    mode TEXT NOT NULL,
    reason TEXT NOT NULL,
    policy TEXT NOT NULL,
    expires TEXT,
    created_at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS triggers (
    id INTEGER PRIMARY KEY,
    item_id INTEGER NOT NULL,
    kind TEXT NOT NULL,
    at TEXT,
    cadence TEXT,
    action TEXT,
    fired INTEGER NOT NULL DEFAULT 0,
    created_at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS audit_log (
    seq INTEGER PRIMARY KEY,
    actor TEXT,
    op TEXT NOT NULL,
    affected_ids TEXT NOT NULL,
    before_digest TEXT NOT NULL,
    after_digest TEXT NOT NULL,
    timestamp TEXT NOT NULL
);
INSERT OR IGNORE INTO counters (name, value) VALUES ('item', 0);
";

pub const DIGEST_TABLES: [(&str, &str); 6] = [
    ("counters", "name"),
    ("memory_items", "id"),
    ("lineage", "parent_id, child_id, kind"),
    ("locks", "item_id"),
    ("triggers", "id"),
    ("audit_log", "seq"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    Split,
    Merge,
    Summary,
}

impl EdgeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::Split => "split",
            EdgeKind::Merge => "merge",
            EdgeKind::Summary => "summary",
        }
    }
}

type Res<T> = rusqlite::Result<T>;

fn conv_err(e: impl std::fmt::Display) -> rusqlite::Error {
    rusqlite::Error::ToSqlConversionFailure(e.to_string().into())
}

fn time_col(row: &Row, idx: usize) -> Res<DateTime<Utc>> {
    let s: String = row.get(idx)?;
    parse_utc(&s).map_err(conv_err)
}

fn opt_time_col(row: &Row, idx: usize) -> Res<Option<DateTime<Utc>>> {
    let s: Option<String> = row.get(idx)?;
    s.map(|s| parse_utc(&s).map_err(conv_err)).transpose()
}

fn json_col<T: serde::de::DeserializeOwned>(row: &Row, idx: usize) -> Res<T> {
    let s: String = row.get(idx)?;
    serde_json::from_str(&s).map_err(conv_err)
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    canonical_json(&serde_json::to_value(v).expect("serializable"))
}

fn sql_id(id: &str) -> i64 {
    id_seq(id) as i64
}

pub fn next_item_id(conn: &Connection) -> Res<String> {
    conn.execute(
        "UPDATE counters SET value = value + 1 WHERE name = 'item'",
        [],
    )?;
    let v: i64 = conn.query_row("SELECT value FROM counters WHERE name = 'item'", [], |r| {
        r.get(0)
    })?;
    Ok(v.to_string())
}

const ITEM_COLS: &str = "id, text, type, tags, facets, weight, embedding, time, source, actor, \
    location, expiry_until, on_expire, expiry_applied, deleted, created_at, updated_at";

fn item_from_row(row: &Row) -> Res<MemoryItem> {
    let id: i64 = row.get(0)?;
    let embedding: Option<String> = row.get(6)?;
    let embedding = embedding
        .map(|s| serde_json::from_str::<Vec<f64>>(&s).map_err(conv_err))
        .transpose()?;
    let until = opt_time_col(row, 11)?;
    let on_expire: Option<String> = row.get(12)?;
    let expiry = match (until, on_expire) {
        (Some(until), Some(action)) => Some(Expiry {
            until,
            on_expire: OnExpire::parse(&action).ok_or_else(|| conv_err(&action))?,
            applied: row.get::<_, i64>(13)? != 0,
        }),
        _ => None,
    };
    Ok(MemoryItem {
        id: id.to_string(),
        text: row.get(1)?,
        item_type: row.get(2)?,
        tags: json_col(row, 3)?,
        facets: json_col(row, 4)?,
        weight: row.get(5)?,
        embedding,
        time: time_col(row, 7)?,
        source: row.get(8)?,
        actor: row.get(9)?,
        location: row.get(10)?,
        lineage: Lineage::default(),
        lock: None,
        expiry,
        deleted: row.get::<_, i64>(14)? != 0,
        created_at: time_col(row, 15)?,
        updated_at: time_col(row, 16)?,
    })
}

/// Every item row (including soft-deleted ones) with lineage and locks
/// attached, in ascending id order.
pub fn load_items(conn: &Connection) -> Res<Vec<MemoryItem>> {
    let mut stmt = conn.prepare(&format!("SELECT {ITEM_COLS} FROM memory_items ORDER BY id"))?;
    let mut items: Vec<MemoryItem> = stmt.query_map([], item_from_row)?.collect::<Res<_>>()?;
    let index: BTreeMap<String, usize> = items
        .iter()
        .enumerate()
        .map(|(i, it)| (it.id.clone(), i))
        .collect();

    let mut stmt = conn.prepare(
        "SELECT parent_id, child_id, kind FROM lineage ORDER BY parent_id, child_id, kind",
    )?;
    let edges = stmt
        .query_map([], |r| {
            Ok((
                r.get::<_, i64>(0)?,
                r.get::<_, i64>(1)?,
                r.get::<_, String>(2)?,
            ))
        })?
        .collect::<Res<Vec<_>>>()?;
    for (p, c, kind) in edges {
        let (p, c) = (p.to_string(), c.to_string());
        if let Some(&ci) = index.get(&c) {
            match kind.as_str() {
                "split" => items[ci].lineage.parent_id = Some(p.clone()),
                "merge" => items[ci].lineage.merged_into = Some(p.clone()),
                _ => {}
            }
        }
        if let Some(&pi) = index.get(&p) {
            let children = &mut items[pi].lineage.child_ids;
            if !children.contains(&c) {
                children.push(c);
            }
        }
    }

    let mut stmt = conn
        .prepare("SELECT item_id, mode, reason, policy, created_at FROM locks ORDER BY item_id")?;
    let locks = stmt
        .query_map([], |r| {
            let mode: String = r.get(1)?;
            Ok((
                r.get::<_, i64>(0)?.to_string(),
                LockRecord {
                    mode: LockMode::parse(&mode).ok_or_else(|| conv_err(&mode))?,
                    reason: r.get(2)?,
                    policy: json_col::<PolicySpec>(r, 3)?,
                    created_at: time_col(r, 4)?,
                },
            ))
        })?
        .collect::<Res<Vec<_>>>()?;
    for (id, lock) in locks {
        if let Some(&i) = index.get(&id) {
            items[i].lock = Some(lock);
        }
    }
    Ok(items)
}

fn item_params(item: &MemoryItem) -> [Box<dyn rusqlite::ToSql>; 17] {
    [
        Box::new(sql_id(&item.id)),
        Box::new(item.text.clone()),
        Box::new(item.item_type.clone()),
        Box::new(to_json(&item.tags)),
        Box::new(to_json(&item.facets)),
        Box::new(item.weight),
        Box::new(item.embedding.as_ref().map(to_json)),
        Box::new(render_utc(&item.time)),
        Box::new(item.source.clone()),
        Box::new(item.actor.clone()),
        Box::new(item.location.clone()),
        Box::new(item.expiry.as_ref().map(|e| render_utc(&e.until))),
        Box::new(
            item.expiry
                .as_ref()
                .map(|e| e.on_expire.as_str().to_string()),
        ),
        Box::new(item.expiry.as_ref().is_some_and(|e| e.applied) as i64),
        Box::new(item.deleted as i64),
        Box::new(render_utc(&item.created_at)),
        Box::new(render_utc(&item.updated_at)),
    ]
}

/// Inserts or overwrites the item's own row. Lineage and locks live in
/// their own tables and are written separately.
pub fn save_item(conn: &Connection, item: &MemoryItem) -> Res<()> {
    let p = item_params(item);
    let refs: Vec<&dyn rusqlite::ToSql> = p.iter().map(|b| b.as_ref()).collect();
    conn.execute(
        &format!(
            "INSERT OR REPLACE INTO memory_items ({ITEM_COLS}) VALUES \
             (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10, ?11, ?12, ?13, ?14, ?15, ?16, ?17)"
        ),
        refs.as_slice(),
    )?;
    Ok(())
}

/// Physically removes an item with its lock, triggers and lineage edges.
pub fn purge_item(conn: &Connection, id: &str) -> Res<()> {
    let id = sql_id(id);
    conn.execute("DELETE FROM memory_items WHERE id = ?1", [id])?;
    conn.execute("DELETE FROM locks WHERE item_id = ?1", [id])?;
    conn.execute("DELETE FROM triggers WHERE item_id = ?1", [id])?;
    conn.execute(
        "DELETE FROM lineage WHERE parent_id = ?1 OR child_id = ?1",
        [id],
    )?;
    Ok(())
}

pub fn add_edge(conn: &Connection, parent: &str, child: &str, kind: EdgeKind) -> Res<()> {
    conn.execute(
        "INSERT OR IGNORE INTO lineage (parent_id, child_id, kind) VALUES (?1, ?2, ?3)",
        params![sql_id(parent), sql_id(child), kind.as_str()],
    )?;
    Ok(())
}

pub fn put_lock(conn: &Connection, id: &str, lock: &LockRecord) -> Res<()> {
    conn.execute(
        "INSERT OR REPLACE INTO locks (item_id, mode, reason, policy, expires, created_at) \
         VALUES (?1, ?2, ?3, ?4, ?5, ?6)",
        params![
            sql_id(id),
            lock.mode.as_str(),
            lock.reason,
            to_json(&lock.policy),
            lock.policy.expires.as_ref().map(render_utc),
            render_utc(&lock.created_at),
        ],
    )?;
    Ok(())
}

pub struct NewTrigger<'a> {
    pub item_id: &'a str,
    pub kind: TriggerKind,
    pub at: Option<DateTime<Utc>>,
    pub cadence: Option<String>,
    pub action: Option<String>,
}

pub fn add_trigger(conn: &Connection, t: NewTrigger<'_>, now: &DateTime<Utc>) -> Res<i64> {
    conn.execute(
        "INSERT INTO triggers (item_id, kind, at, cadence, action, fired, created_at) \
         VALUES (?1, ?2, ?3, ?4, ?5, 0, ?6)",
        params![
            sql_id(t.item_id),
            t.kind.as_str(),
            t.at.as_ref().map(render_utc),
            t.cadence,
            t.action,
            render_utc(now),
        ],
    )?;
    Ok(conn.last_insert_rowid())
}

/// Drops unfired expiry triggers for an item about to get a new expiry.
pub fn clear_pending_expiry(conn: &Connection, id: &str) -> Res<()> {
    conn.execute(
        "DELETE FROM triggers WHERE item_id = ?1 AND kind = 'expire' AND fired = 0",
        [sql_id(id)],
    )?;
    Ok(())
}

pub fn fire_expiry(conn: &Connection, id: &str) -> Res<()> {
    conn.execute(
        "UPDATE triggers SET fired = 1 WHERE item_id = ?1 AND kind = 'expire' AND fired = 0",
        [sql_id(id)],
    )?;
    Ok(())
}

pub fn load_triggers(conn: &Connection) -> Res<Vec<TriggerRow>> {
    let mut stmt = conn.prepare(
        "SELECT id, item_id, kind, at, cadence, action, fired, created_at FROM triggers ORDER BY id",
    )?;
    let rows = stmt
        .query_map([], |r| {
            let kind: String = r.get(2)?;
            Ok(TriggerRow {
                id: r.get(0)?,
                item_id: r.get::<_, i64>(1)?.to_string(),
                kind: match kind.as_str() {
                    "reminder" => TriggerKind::Reminder,
                    "expire" => TriggerKind::Expire,
                    other => return Err(conv_err(other)),
                },
                at: opt_time_col(r, 3)?,
                cadence: r.get(4)?,
                action: r.get(5)?,
                fired: r.get::<_, i64>(6)? != 0,
                created_at: time_col(r, 7)?,
            })
        })?
        .collect::<Res<Vec<_>>>()?;
    Ok(rows)
}

pub fn append_audit(
    conn: &Connection,
    actor: Option<&str>,
    op: OpKind,
    affected: &[String],
    before: &str,
    after: &str,
    now: &DateTime<Utc>,
) -> Res<i64> {
    let next: i64 = conn
        .query_row("SELECT MAX(seq) FROM audit_log", [], |r| {
            r.get::<_, Option<i64>>(0)
        })?
        .unwrap_or(0)
        + 1;
    conn.execute(
        "INSERT INTO audit_log (seq, actor, op, affected_ids, before_digest, after_digest, timestamp) \
         VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7)",
        params![next, actor, op.as_str(), to_json(&affected), before, after, render_utc(now)],
    )?;
    Ok(next)
}

pub fn load_audit(conn: &Connection) -> Res<Vec<AuditRecord>> {
    let mut stmt = conn.prepare(
        "SELECT seq, actor, op, affected_ids, before_digest, after_digest, timestamp \
         FROM audit_log ORDER BY seq",
    )?;
    let rows = stmt
        .query_map([], |r| {
            let op: String = r.get(2)?;
            Ok(AuditRecord {
                seq: r.get(0)?,
                actor: r.get(1)?,
                op: op.parse().map_err(conv_err)?,
                affected_ids: json_col(r, 3)?,
                before_digest: r.get(4)?,
                after_digest: r.get(5)?,
                timestamp: time_col(r, 6)?,
            })
        })?
        .collect::<Res<Vec<_>>>()?;
    Ok(rows)
}

pub fn audit_len(conn: &Connection) -> Res<usize> {
    conn.query_row("SELECT COUNT(*) FROM audit_log", [], |r| r.get::<_, i64>(0))
        .map(|n| n as usize)
}

pub fn has_table(conn: &Connection, name: &str) -> Res<bool> {
    conn.query_row(
        "SELECT 1 FROM sqlite_master WHERE type = 'table' AND name = ?1",
        [name],
        |_| Ok(()),
    )
    .optional()
    .map(|o| o.is_some())
}

fn cell(v: ValueRef<'_>) -> Value {
    match v {
        ValueRef::Null => Value::Null,
        ValueRef::Integer(i) => json!(i),
        ValueRef::Real(f) => json!(f),
        ValueRef::Text(t) => Value::String(String::from_utf8_lossy(t).into_owned()),
        ValueRef::Blob(b) => Value::String(b.iter().map(|x| format!("{x:02x}")).collect()),
    }
}

pub fn digest(conn: &Connection) -> Res<String> {
    let mut h = Sha256::new();
    for (table, order) in DIGEST_TABLES {
        h.update(format!("table:{table}\n").as_bytes());
        let mut stmt = conn.prepare(&format!("SELECT * FROM {table} ORDER BY {order}"))?;
        let ncols = stmt.column_count();
        let mut rows = stmt.query([])?;
        while let Some(row) = rows.next()? {
            let cells: Vec<Value> = (0..ncols)
                .map(|i| row.get_ref(i).map(cell))
                .collect::<Res<_>>()?;
            h.update(canonical_json(&Value::Array(cells)).as_bytes());
            h.update(b"\n");
        }
    }
    Ok(format!("{:x}", h.finalize()))
}
