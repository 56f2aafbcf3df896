use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::schema::{LockMode, OnExpire, OpKind};
use crate::typed::PolicySpec;

/// Facet set by Demote{archive} and the `archive` expiry action.
pub const ARCHIVED_FACET: &str = "archived";
/// Facet set on the source of a Split.
pub const SPLIT_FACET: &str = "split";

pub const DEFAULT_WEIGHT: f64 = 0.5;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Lineage {
    pub parent_id: Option<String>,
    pub merged_into: Option<String>,
    pub child_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LockRecord {
    pub mode: LockMode,
    pub reason: String,
    pub policy: PolicySpec,
    pub created_at: DateTime<Utc>,
}

impl LockRecord {
    /// A lock whose policy expiry has passed is kept but no longer enforced.
    pub fn is_active(&self, now: &DateTime<Utc>) -> bool {
        self.policy.expires.is_none_or(|e| e > *now)
    }

    /// Whether a read-only op may see the item.
    pub fn permits_read(&self, op: OpKind) -> bool {
        !self.policy.deny.contains(&op)
            && (self.policy.allow.is_empty() || self.policy.allow.contains(&op))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expiry {
    pub until: DateTime<Utc>,
    pub on_expire: OnExpire,
    /// Set once the sweep has applied `on_expire`.
    pub applied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryItem {
    pub id: String,
    pub text: String,
    #[serde(rename = "type")]
    pub item_type: String,
    pub tags: Vec<String>,
    pub facets: BTreeMap<String, String>,
    pub weight: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub embedding: Option<Vec<f64>>,
    pub time: DateTime<Utc>,
    pub source: Option<String>,
    pub actor: Option<String>,
    pub location: Option<String>,
    pub lineage: Lineage,
    pub lock: Option<LockRecord>,
    pub expiry: Option<Expiry>,
    pub deleted: bool,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

impl MemoryItem {
    pub fn is_archived(&self) -> bool {
        self.facets.get(ARCHIVED_FACET).is_some_and(|v| v == "true")
    }

    pub fn is_expired(&self, now: &DateTime<Utc>) -> bool {
        self.expiry.as_ref().is_some_and(|e| e.until <= *now)
    }

    pub fn active_lock(&self, now: &DateTime<Utc>) -> Option<&LockRecord> {
        self.lock.as_ref().filter(|l| l.is_active(now))
    }

    /// Numeric ordering key for the store's decimal ids.
    pub fn seq(&self) -> u64 {
        id_seq(&self.id)
    }
}

pub fn id_seq(id: &str) -> u64 {
    id.parse().unwrap_or(u64::MAX)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerKind {
    Reminder,
    Expire,
}

impl TriggerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TriggerKind::Reminder => "reminder",
            TriggerKind::Expire => "expire",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerRow {
    pub id: i64,
    pub item_id: String,
    pub kind: TriggerKind,
    pub at: Option<DateTime<Utc>>,
    pub cadence: Option<String>,
    pub action: Option<String>,
    pub fired: bool,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub seq: i64,
    pub actor: Option<String>,
    pub op: OpKind,
    pub affected_ids: Vec<String>,
    pub before_digest: String,
    pub after_digest: String,
    pub timestamp: DateTime<Utc>,
}

/// Full logical state of a store at one instant, for assertion evaluation.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StoreSnapshot {
    pub items: BTreeMap<String, MemoryItem>,
    pub triggers: Vec<TriggerRow>,
    pub audit_len: usize,
}

impl StoreSnapshot {
    pub fn active_count(&self) -> usize {
        self.items.values().filter(|i| !i.deleted).count()
    }

    pub fn row_count(&self) -> usize {
        self.items.len()
    }

    pub fn get(&self, id: &str) -> Option<&MemoryItem> {
        self.items.get(id)
    }

    pub fn triggers_for<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a TriggerRow> + 'a {
        self.triggers.iter().filter(move |t| t.item_id == id)
    }
}
