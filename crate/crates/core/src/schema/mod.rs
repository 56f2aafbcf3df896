//! Five-field schema instances (`stage`, `op`, `target`, `args`, `meta`) and
//! their canonical JSON wire format.
//!
//! Decoding is strict: unknown keys at the top level or inside `args` are
//! rejected so that canonical encodings of two instances compare equal only
//! when the instances do. Semantic rules (required arguments, confirmation
//! switches, ranges) are left to [`crate::validate`].

mod canonical;
mod time;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

pub use canonical::canonical_json;
pub use time::{parse_utc, render_utc, IsoDuration, TimeError, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OpKind {
    Encode,
    Update,
    Label,
    Promote,
    Demote,
    Merge,
    Delete,
    Split,
    Lock,
    Expire,
    Retrieve,
    Summarize,
}

impl OpKind {
    pub const ALL: [OpKind; 12] = [
        OpKind::Encode,
        OpKind::Update,
        OpKind::Label,
        OpKind::Promote,
        OpKind::Demote,
        OpKind::Merge,
        OpKind::Delete,
        OpKind::Split,
        OpKind::Lock,
        OpKind::Expire,
        OpKind::Retrieve,
        OpKind::Summarize,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OpKind::Encode => "Encode",
            OpKind::Update => "Update",
            OpKind::Label => "Label",
            OpKind::Promote => "Promote",
            OpKind::Demote => "Demote",
            OpKind::Merge => "Merge",
            OpKind::Delete => "Delete",
            OpKind::Split => "Split",
            OpKind::Lock => "Lock",
            OpKind::Expire => "Expire",
            OpKind::Retrieve => "Retrieve",
            OpKind::Summarize => "Summarize",
        }
    }

    pub fn stage(self) -> Stage {
        infer_stage(self)
    }

    /// Ops that never change store state.
    pub fn is_read(self) -> bool {
        matches!(self, OpKind::Retrieve)
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OpKind {
    type Err = DecodeError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        OpKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| DecodeError::UnknownOp(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "ENC")]
    Enc,
    #[serde(rename = "STO")]
    Sto,
    #[serde(rename = "RET")]
    Ret,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Enc => "ENC",
            Stage::Sto => "STO",
            Stage::Ret => "RET",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn infer_stage(op: OpKind) -> Stage {
    match op {
        OpKind::Encode => Stage::Enc,
        OpKind::Retrieve | OpKind::Summarize => Stage::Ret,
        _ => Stage::Sto,
    }
}

// ---------------------------------------------------------------------------
// Targets
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Ids(Vec<String>),
    Filter(Filter),
    Search(SearchSpec),
    /// Global scope. Only `all: true` decodes; `all: false` is not a target.
    All,
}

impl Target {
    pub fn kind(&self) -> &'static str {
        match self {
            Target::Ids(_) => "ids",
            Target::Filter(_) => "filter",
            Target::Search(_) => "search",
            Target::All => "all",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Filter {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub has_tags: Option<Vec<String>>,
    #[serde(rename = "type", default, skip_serializing_if = "Option::is_none")]
    pub item_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_range: Option<TimeRange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_range: Option<WeightRange>,
    /// Exact-match facet predicates (`{"archived": "true"}` surfaces archived items).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub facets: Option<BTreeMap<String, String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<u64>,
}

impl Filter {
    pub fn has_predicate(&self) -> bool {
        self.has_tags.as_ref().is_some_and(|t| !t.is_empty())
            || self.item_type.is_some()
            || self.time_range.is_some()
            || self.weight_range.is_some()
            || self.facets.as_ref().is_some_and(|f| !f.is_empty())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeRange {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Timestamp>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<Timestamp>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightRange {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpec {
    pub intent: Intent,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overrides: Option<Overrides>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intent {
    pub query: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order_by: Option<OrderBy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<u64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderBy {
    #[default]
    Relevance,
    TimeDesc,
    TimeAsc,
}

// ---------------------------------------------------------------------------
// Meta
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Meta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actor: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<Timestamp>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lang: Option<String>,
    #[serde(default)]
    pub confirmation: bool,
    #[serde(default)]
    pub dry_run: bool,
}

// ---------------------------------------------------------------------------
// Per-op arguments
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Payload {
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncodeArgs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<Payload>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tags: Option<Vec<String>>,
    #[serde(rename = "type", default, skip_serializing_if = "Option::is_none")]
    pub item_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<Timestamp>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub facets: Option<BTreeMap<String, String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub use_embedding: Option<bool>,
}

/// Item fields an `Update.set` may write.
pub const SETTABLE_FIELDS: [&str; 9] = [
    "text", "type", "tags", "facets", "weight", "time", "source", "actor", "location",
];
/// Item fields an `Update.set` may name but never write.
pub const RESERVED_FIELDS: [&str; 4] = ["id", "lineage", "lock", "deleted"];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UpdateArgs {
    #[serde(default)]
    pub set: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    #[default]
    Add,
    Replace,
    Remove,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelArgs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tags: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub facets: Option<BTreeMap<String, String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<LabelMode>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reminder {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cadence: Option<IsoDuration>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at: Option<Timestamp>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromoteArgs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reminder: Option<Reminder>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoteArgs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub archive: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MergeArgs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delete_children: Option<bool>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeleteMode {
    #[default]
    Soft,
    Hard,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeleteArgs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<DeleteMode>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitStrategyName {
    #[default]
    Sentences,
    Chunks,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitArgs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<SplitStrategyName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chunk_size: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LockMode {
    ReadOnly,
    AppendOnly,
}

impl LockMode {
    pub fn as_str(self) -> &'static str {
        match self {
            LockMode::ReadOnly => "read_only",
            LockMode::AppendOnly => "append_only",
        }
    }

    pub fn parse(s: &str) -> Option<LockMode> {
        match s {
            "read_only" => Some(LockMode::ReadOnly),
            "append_only" => Some(LockMode::AppendOnly),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LockPolicy {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allow: Option<Vec<OpKind>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deny: Option<Vec<OpKind>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reviewers: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expires: Option<Timestamp>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LockArgs {
    /// Kept as raw text; membership in {read_only, append_only} is a
    /// validator rule rather than a decode failure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<LockPolicy>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OnExpire {
    DeleteSoft,
    Demote,
    Archive,
    Anonymize,
}

impl OnExpire {
    pub fn as_str(self) -> &'static str {
        match self {
            OnExpire::DeleteSoft => "delete_soft",
            OnExpire::Demote => "demote",
            OnExpire::Archive => "archive",
            OnExpire::Anonymize => "anonymize",
        }
    }

    pub fn parse(s: &str) -> Option<OnExpire> {
        [
            OnExpire::DeleteSoft,
            OnExpire::Demote,
            OnExpire::Archive,
            OnExpire::Anonymize,
        ]
        .into_iter()
        .find(|o| o.as_str() == s)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpireArgs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ttl: Option<IsoDuration>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub until: Option<Timestamp>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub on_expire: Option<OnExpire>,
}

/// Item fields a `Retrieve.fields` whitelist may name.
pub const RETRIEVABLE_FIELDS: [&str; 16] = [
    "id",
    "text",
    "type",
    "tags",
    "facets",
    "weight",
    "time",
    "source",
    "actor",
    "location",
    "lineage",
    "lock",
    "expiry",
    "created_at",
    "updated_at",
    "score",
];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrieveArgs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fields: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SummarizeArgs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focus: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u64>,
}

/// Verb-specific arguments; the variant determines the instance's `op`.
#[derive(Debug, Clone, PartialEq)]
pub enum Args {
    Encode(EncodeArgs),
    Update(UpdateArgs),
    Label(LabelArgs),
    Promote(PromoteArgs),
    Demote(DemoteArgs),
    Merge(MergeArgs),
    Delete(DeleteArgs),
    Split(SplitArgs),
    Lock(LockArgs),
    Expire(ExpireArgs),
    Retrieve(RetrieveArgs),
    Summarize(SummarizeArgs),
}

impl Args {
    pub fn op(&self) -> OpKind {
        match self {
            Args::Encode(_) => OpKind::Encode,
            Args::Update(_) => OpKind::Update,
            Args::Label(_) => OpKind::Label,
            Args::Promote(_) => OpKind::Promote,
            Args::Demote(_) => OpKind::Demote,
            Args::Merge(_) => OpKind::Merge,
            Args::Delete(_) => OpKind::Delete,
            Args::Split(_) => OpKind::Split,
            Args::Lock(_) => OpKind::Lock,
            Args::Expire(_) => OpKind::Expire,
            Args::Retrieve(_) => OpKind::Retrieve,
            Args::Summarize(_) => OpKind::Summarize,
        }
    }

    fn to_value(&self) -> Value {
        let v = match self {
            Args::Encode(a) => serde_json::to_value(a),
            Args::Update(a) => serde_json::to_value(a),
            Args::Label(a) => serde_json::to_value(a),
            Args::Promote(a) => serde_json::to_value(a),
            Args::Demote(a) => serde_json::to_value(a),
            Args::Merge(a) => serde_json::to_value(a),
            Args::Delete(a) => serde_json::to_value(a),
            Args::Split(a) => serde_json::to_value(a),
            Args::Lock(a) => serde_json::to_value(a),
            Args::Expire(a) => serde_json::to_value(a),
            Args::Retrieve(a) => serde_json::to_value(a),
            Args::Summarize(a) => serde_json::to_value(a),
        };
        v.expect("argument records always serialize")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemaInstance {
    /// As provided; `None` when the author left it to inference.
    pub stage: Option<Stage>,
    pub target: Option<Target>,
    pub args: Args,
    pub meta: Meta,
}

impl SchemaInstance {
    pub fn op(&self) -> OpKind {
        self.args.op()
    }

    pub fn to_value(&self) -> Value {
        let mut obj = Map::new();
        if let Some(stage) = self.stage {
            obj.insert("stage".into(), Value::String(stage.as_str().into()));
        }
        obj.insert("op".into(), Value::String(self.op().as_str().into()));
        if let Some(target) = &self.target {
            obj.insert("target".into(), target_to_value(target));
        }
        obj.insert("args".into(), self.args.to_value());
        obj.insert(
            "meta".into(),
            serde_json::to_value(&self.meta).expect("meta always serializes"),
        );
        Value::Object(obj)
    }
}

fn target_to_value(t: &Target) -> Value {
    let inner = match t {
        Target::Ids(ids) => Value::from(ids.clone()),
        Target::Filter(f) => serde_json::to_value(f).expect("filter serializes"),
        Target::Search(s) => serde_json::to_value(s).expect("search serializes"),
        Target::All => Value::Bool(true),
    };
    let mut obj = Map::new();
    obj.insert(t.kind().into(), inner);
    Value::Object(obj)
}

// ---------------------------------------------------------------------------
// Decode / encode
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("malformed JSON: {0}")]
    MalformedJson(String),
    #[error("unknown field `{field}` at {path}")]
    UnknownField { path: String, field: String },
    #[error("unknown op `{0}`")]
    UnknownOp(String),
    #[error("missing required field {0}")]
    MissingField(String),
    #[error("invalid target at {path}: {reason}")]
    InvalidTarget { path: String, reason: String },
    #[error("invalid value at {path}: {reason}")]
    InvalidValue { path: String, reason: String },
}

impl DecodeError {
    pub fn code(&self) -> &'static str {
        match self {
            DecodeError::MalformedJson(_) => "MalformedJson",
            DecodeError::UnknownField { .. } => "UnknownField",
            DecodeError::UnknownOp(_) => "UnknownOp",
            DecodeError::MissingField(_) => "MissingField",
            DecodeError::InvalidTarget { .. } => "InvalidTarget",
            DecodeError::InvalidValue { .. } => "InvalidValue",
        }
    }

    /// JSON pointer to the offending location.
    pub fn path(&self) -> String {
        match self {
            DecodeError::MalformedJson(_) => String::new(),
            DecodeError::UnknownOp(_) => "/op".into(),
            DecodeError::MissingField(p) => p.clone(),
            DecodeError::UnknownField { path, field } => format!("{path}/{field}"),
            DecodeError::InvalidTarget { path, .. } | DecodeError::InvalidValue { path, .. } => {
                path.clone()
            }
        }
    }
}

const TOP_LEVEL_KEYS: [&str; 5] = ["stage", "op", "target", "args", "meta"];

pub fn decode_instance(json_text: &str) -> Result<SchemaInstance, DecodeError> {
    let value: Value =
        serde_json::from_str(json_text).map_err(|e| DecodeError::MalformedJson(e.to_string()))?;
    decode_value(&value)
}

pub fn decode_value(value: &Value) -> Result<SchemaInstance, DecodeError> {
    let obj = value.as_object().ok_or_else(|| DecodeError::InvalidValue {
        path: String::new(),
        reason: "schema instance must be a JSON object".into(),
    })?;
    if let Some(k) = obj.keys().find(|k| !TOP_LEVEL_KEYS.contains(&k.as_str())) {
        return Err(DecodeError::UnknownField {
            path: String::new(),
            field: k.clone(),
        });
    }

    let op = match obj.get("op") {
        None => return Err(DecodeError::MissingField("/op".into())),
        Some(Value::String(s)) => s.parse::<OpKind>()?,
        Some(other) => return Err(DecodeError::UnknownOp(other.to_string())),
    };

    let stage = match obj.get("stage") {
        None | Some(Value::Null) => None,
        Some(v) => Some(typed::<Stage>(v, "/stage")?),
    };

    let target = match obj.get("target") {
        None | Some(Value::Null) => None,
        Some(v) => Some(decode_target(v)?),
    };

    let empty = Value::Object(Map::new());
    let args_value = match obj.get("args") {
        None | Some(Value::Null) => &empty,
        Some(v) => v,
    };
    let args = decode_args(op, args_value)?;

    let meta = match obj.get("meta") {
        None | Some(Value::Null) => Meta::default(),
        Some(v) => typed::<Meta>(v, "/meta")?,
    };

    Ok(SchemaInstance {
        stage,
        target,
        args,
        meta,
    })
}

/// Canonical JSON: keys sorted, no insignificant whitespace.
pub fn encode_instance(inst: &SchemaInstance) -> String {
    canonical_json(&inst.to_value())
}

fn decode_target(v: &Value) -> Result<Target, DecodeError> {
    const KINDS: [&str; 4] = ["ids", "filter", "search", "all"];
    let obj = v.as_object().ok_or_else(|| DecodeError::InvalidTarget {
        path: "/target".into(),
        reason: "target must be an object".into(),
    })?;
    if let Some(k) = obj.keys().find(|k| !KINDS.contains(&k.as_str())) {
        return Err(DecodeError::UnknownField {
            path: "/target".into(),
            field: k.clone(),
        });
    }
    // `all: false` and `ids: []` select nothing and do not count as populated.
    let populated: Vec<&str> = KINDS
        .into_iter()
        .filter(|k| match obj.get(*k) {
            None | Some(Value::Null) => false,
            Some(Value::Bool(false)) => false,
            Some(Value::Array(a)) if a.is_empty() => false,
            Some(_) => true,
        })
        .collect();
    if populated.len() != 1 {
        return Err(DecodeError::InvalidTarget {
            path: "/target".into(),
            reason: format!(
                "choose exactly one of ids/filter/search/all (found {})",
                populated.len()
            ),
        });
    }
    let kind = populated[0];
    let inner = &obj[kind];
    let path = format!("/target/{kind}");
    match kind {
        "ids" => Ok(Target::Ids(typed(inner, &path)?)),
        "filter" => Ok(Target::Filter(typed(inner, &path)?)),
        "search" => Ok(Target::Search(typed(inner, &path)?)),
        _ => match inner {
            Value::Bool(true) => Ok(Target::All),
            _ => Err(DecodeError::InvalidTarget {
                path,
                reason: "all must be the boolean true".into(),
            }),
        },
    }
}

fn decode_args(op: OpKind, v: &Value) -> Result<Args, DecodeError> {
    const P: &str = "/args";
    if !v.is_object() {
        return Err(DecodeError::InvalidValue {
            path: P.into(),
            reason: "args must be an object".into(),
        });
    }
    Ok(match op {
        OpKind::Encode => Args::Encode(typed(v, P)?),
        OpKind::Update => {
            let args: UpdateArgs = typed(v, P)?;
            check_update_set(&args.set)?;
            Args::Update(args)
        }
        OpKind::Label => Args::Label(typed(v, P)?),
        OpKind::Promote => Args::Promote(typed(v, P)?),
        OpKind::Demote => Args::Demote(typed(v, P)?),
        OpKind::Merge => Args::Merge(typed(v, P)?),
        OpKind::Delete => Args::Delete(typed(v, P)?),
        OpKind::Split => Args::Split(typed(v, P)?),
        OpKind::Lock => Args::Lock(typed(v, P)?),
        OpKind::Expire => Args::Expire(typed(v, P)?),
        OpKind::Retrieve => {
            let args: RetrieveArgs = typed(v, P)?;
            for (i, f) in args.fields.iter().flatten().enumerate() {
                if !RETRIEVABLE_FIELDS.contains(&f.as_str()) {
                    return Err(DecodeError::InvalidValue {
                        path: format!("/args/fields/{i}"),
                        reason: format!("`{f}` is not a retrievable field"),
                    });
                }
            }
            Args::Retrieve(args)
        }
        OpKind::Summarize => Args::Summarize(typed(v, P)?),
    })
}

fn check_update_set(set: &BTreeMap<String, Value>) -> Result<(), DecodeError> {
    for (key, value) in set {
        if RESERVED_FIELDS.contains(&key.as_str()) {
            continue; // the validator reports these
        }
        if !SETTABLE_FIELDS.contains(&key.as_str()) {
            return Err(DecodeError::UnknownField {
                path: "/args/set".into(),
                field: key.clone(),
            });
        }
        let path = format!("/args/set/{key}");
        match key.as_str() {
            "tags" => {
                typed::<Vec<String>>(value, &path)?;
            }
            "facets" => {
                typed::<BTreeMap<String, String>>(value, &path)?;
            }
            "weight" => {
                typed::<f64>(value, &path)?;
            }
            "time" => {
                typed::<Timestamp>(value, &path)?;
            }
            _ => {
                typed::<String>(value, &path)?;
            }
        }
    }
    Ok(())
}

/// Deserializes `v` into `T`, mapping serde failures onto decode errors with
/// JSON-pointer paths rooted at `base`.
fn typed<T: DeserializeOwned>(v: &Value, base: &str) -> Result<T, DecodeError> {
    serde_path_to_error::deserialize::<_, T>(v).map_err(|e| {
        let mut path = base.to_string();
        for seg in e.path().iter() {
            match seg {
                serde_path_to_error::Segment::Seq { index } => path.push_str(&format!("/{index}")),
                serde_path_to_error::Segment::Map { key }
                | serde_path_to_error::Segment::Enum { variant: key } => {
                    path.push('/');
                    path.push_str(key);
                }
                serde_path_to_error::Segment::Unknown => {}
            }
        }
        let msg = e.inner().to_string();
        if let Some(field) = unknown_field_name(&msg) {
            let path = path
                .strip_suffix(&format!("/{field}"))
                .map(str::to_string)
                .unwrap_or(path);
            DecodeError::UnknownField { path, field }
        } else if let Some(field) = missing_field_name(&msg) {
            DecodeError::MissingField(format!("{path}/{field}"))
        } else if base == "/stage" {
            DecodeError::InvalidValue {
                path,
                reason: format!("stage must be one of ENC, STO, RET ({msg})"),
            }
        } else {
            DecodeError::InvalidValue { path, reason: msg }
        }
    })
}

fn backticked(msg: &str, prefix: &str) -> Option<String> {
    let rest = msg.strip_prefix(prefix)?;
    let rest = rest.strip_prefix('`')?;
    let end = rest.find('`')?;
    Some(rest[..end].to_string())
}

fn unknown_field_name(msg: &str) -> Option<String> {
    backticked(msg, "unknown field ")
}

fn missing_field_name(msg: &str) -> Option<String> {
    backticked(msg, "missing field ")
}
