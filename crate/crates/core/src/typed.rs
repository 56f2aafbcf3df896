//! Typed operation objects: the normalized internal form dispatched to
//! backends. Parsing materializes every default, deduplicates tag and id
//! lists, clamps weights, resolves time ranges to UTC and folds `ttl` into an
//! absolute `until`.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::schema::{
    infer_stage, Args, DeleteMode, Filter, LabelMode, LockMode, Meta, OnExpire, OpKind, OrderBy,
    SchemaInstance, SearchSpec, SplitStrategyName, Stage, Target, TimeError, Timestamp,
};
use crate::validate::validate;

/// Result size for retrieval searches that name no limit at all.
pub const DEFAULT_SEARCH_LIMIT: u64 = 10;
pub const DEFAULT_MAX_TOKENS: u64 = 256;
/// Window size for `Split{strategy: chunks}` without an explicit chunk_size.
pub const DEFAULT_CHUNK_SIZE: u64 = 200;
pub const DEFAULT_ITEM_TYPE: &str = "note";
pub const DEFAULT_MERGE_STRATEGY: &str = "concat";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("instance breaches the validator contract: {0}")]
    InconsistentInstance(String),
    #[error("ttl needs a reference time but neither meta.timestamp nor a clock was provided")]
    UnresolvableTime,
    #[error("exactly one of weight or weight_delta must be given")]
    BothOrNeither,
    #[error("time range start is after end")]
    InvertedRange,
    #[error(transparent)]
    Time(#[from] TimeError),
}

impl ParseError {
    pub fn code(&self) -> &'static str {
        match self {
            ParseError::InconsistentInstance(_) => "E_INCONSISTENT_INSTANCE",
            ParseError::UnresolvableTime => "E_UNRESOLVABLE_TIME",
            ParseError::BothOrNeither => "E_WEIGHT_EXCLUSIVE",
            ParseError::InvertedRange => "E_RANGE",
            ParseError::Time(_) => "E_TIME",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TypedOp {
    pub op: OpKind,
    pub stage: Stage,
    /// `None` only for Encode.
    pub target: Option<ResolvedTarget>,
    pub args: TypedArgs,
    pub meta: ResolvedMeta,
}

impl TypedOp {
    /// Non-canonical JSON dump for logs.
    pub fn debug_json(&self) -> String {
        serde_json::to_string(self).expect("typed ops serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedMeta {
    pub actor: Option<String>,
    pub timestamp: Option<DateTime<Utc>>,
    pub lang: Option<String>,
    pub confirmation: bool,
    pub dry_run: bool,
}

impl From<&Meta> for ResolvedMeta {
    fn from(m: &Meta) -> Self {
        ResolvedMeta {
            actor: m.actor.clone(),
            timestamp: m.timestamp.map(|t| t.utc()),
            lang: m.lang.clone(),
            confirmation: m.confirmation,
            dry_run: m.dry_run,
        }
    }
}

/// Closed interval of UTC instants. Missing bounds become the
/// [`DateTime::<Utc>::MIN_UTC`] / [`DateTime::<Utc>::MAX_UTC`] sentinels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Interval {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl Interval {
    pub fn contains(&self, t: &DateTime<Utc>) -> bool {
        self.start <= *t && *t <= self.end
    }
}

pub fn normalize_time_range(
    start: Option<&Timestamp>,
    end: Option<&Timestamp>,
) -> Result<Interval, ParseError> {
    let start = start.map_or(DateTime::<Utc>::MIN_UTC, |t| t.utc());
    let end = end.map_or(DateTime::<Utc>::MAX_UTC, |t| t.utc());
    if start > end {
        return Err(ParseError::InvertedRange);
    }
    Ok(Interval { start, end })
}

/// Applies an absolute weight or a delta to `current`, clamped to [0,1].
pub fn normalize_weight(
    current: f64,
    set_weight: Option<f64>,
    delta: Option<f64>,
) -> Result<f64, ParseError> {
    match (set_weight, delta) {
        (Some(w), None) => Ok(w.clamp(0.0, 1.0)),
        (None, Some(d)) => Ok((current + d).clamp(0.0, 1.0)),
        _ => Err(ParseError::BothOrNeither),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolvedTarget {
    Ids(Vec<String>),
    Filter(ResolvedFilter),
    Search(ResolvedSearch),
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedFilter {
    pub has_tags: Vec<String>,
    pub item_type: Option<String>,
    pub time: Option<Interval>,
    /// Clamped to [0,1].
    pub weight: Option<(f64, f64)>,
    pub facets: BTreeMap<String, String>,
    /// `None` means unbounded (retrieval only; storage filters always carry one).
    pub limit: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedSearch {
    pub query: String,
    pub context: Option<String>,
    pub order_by: OrderBy,
    /// Effective limit: the smallest of `limit`, `overrides.limit` and `overrides.k`.
    pub limit: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightChange {
    Set(f64),
    Delta(f64),
}

impl WeightChange {
    pub fn apply(self, current: f64) -> f64 {
        let (set, delta) = match self {
            WeightChange::Set(w) => (Some(w), None),
            WeightChange::Delta(d) => (None, Some(d)),
        };
        normalize_weight(current, set, delta).expect("exactly one side is populated")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EncodeSpec {
    pub text: String,
    pub tags: Vec<String>,
    pub item_type: String,
    /// Event time; the executing clock fills it in when absent.
    pub time: Option<DateTime<Utc>>,
    pub source: Option<String>,
    pub location: Option<String>,
    pub facets: BTreeMap<String, String>,
    pub use_embedding: bool,
}

/// The writable subset of an item, as named by `Update.set`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FieldPatch {
    pub text: Option<String>,
    pub item_type: Option<String>,
    pub tags: Option<Vec<String>>,
    pub facets: Option<BTreeMap<String, String>>,
    pub weight: Option<f64>,
    pub time: Option<DateTime<Utc>>,
    pub source: Option<String>,
    pub actor: Option<String>,
    pub location: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelSpec {
    pub tags: Vec<String>,
    pub facets: BTreeMap<String, String>,
    pub mode: LabelMode,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReminderSpec {
    At(DateTime<Utc>),
    Cadence(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PromoteSpec {
    pub change: WeightChange,
    pub reminder: Option<ReminderSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemoteSpec {
    pub change: WeightChange,
    pub archive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MergeSpec {
    pub strategy: String,
    pub delete_children: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitStrategy {
    Sentences,
    Chunks { size: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub allow: Vec<OpKind>,
    pub deny: Vec<OpKind>,
    pub reviewers: Vec<String>,
    pub expires: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LockSpec {
    pub mode: LockMode,
    pub reason: String,
    pub policy: PolicySpec,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpireSpec {
    pub until: DateTime<Utc>,
    pub on_expire: OnExpire,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrieveSpec {
    /// `None` returns every retrievable field.
    pub fields: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummarizeSpec {
    pub focus: String,
    pub max_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum TypedArgs {
    Encode(EncodeSpec),
    Update(FieldPatch),
    Label(LabelSpec),
    Promote(PromoteSpec),
    Demote(DemoteSpec),
    Merge(MergeSpec),
    Delete { mode: DeleteMode },
    Split(SplitStrategy),
    Lock(LockSpec),
    Expire(ExpireSpec),
    Retrieve(RetrieveSpec),
    Summarize(SummarizeSpec),
}

/// Deduplicates preserving first occurrence; comparison is exact (case-sensitive).
pub fn dedup_preserving_order(items: &[String]) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    items
        .iter()
        .filter(|s| seen.insert(s.as_str()))
        .cloned()
        .collect()
}

/// Converts a validated instance into its typed form.
///
/// `reference` is the clock used to anchor `ttl` when the instance carries
/// no `meta.timestamp`; pass `None` for strict replay.
pub fn parse(
    inst: &SchemaInstance,
    reference: Option<DateTime<Utc>>,
) -> Result<TypedOp, ParseError> {
    let report = validate(inst);
    if !report.ok {
        return Err(ParseError::InconsistentInstance(report.codes().join(",")));
    }
    let op = inst.op();
    let meta = ResolvedMeta::from(&inst.meta);
    let target = inst.target.as_ref().map(resolve_target_spec).transpose()?;
    let anchor = meta.timestamp.or(reference);
    let args = parse_args(&inst.args, anchor)?;
    Ok(TypedOp {
        op,
        stage: infer_stage(op),
        target,
        args,
        meta,
    })
}

fn resolve_target_spec(t: &Target) -> Result<ResolvedTarget, ParseError> {
    Ok(match t {
        Target::Ids(ids) => ResolvedTarget::Ids(dedup_preserving_order(ids)),
        Target::Filter(f) => ResolvedTarget::Filter(resolve_filter(f)?),
        Target::Search(s) => ResolvedTarget::Search(resolve_search(s)),
        Target::All => ResolvedTarget::All,
    })
}

fn resolve_filter(f: &Filter) -> Result<ResolvedFilter, ParseError> {
    let time = f
        .time_range
        .as_ref()
        .map(|tr| normalize_time_range(tr.start.as_ref(), tr.end.as_ref()))
        .transpose()?;
    let weight = f.weight_range.as_ref().map(|wr| {
        (
            wr.min.unwrap_or(0.0).clamp(0.0, 1.0),
            wr.max.unwrap_or(1.0).clamp(0.0, 1.0),
        )
    });
    Ok(ResolvedFilter {
        has_tags: dedup_preserving_order(f.has_tags.as_deref().unwrap_or_default()),
        item_type: f.item_type.clone(),
        time,
        weight,
        facets: f.facets.clone().unwrap_or_default(),
        limit: f.limit,
    })
}

pub fn effective_search_limit(s: &SearchSpec) -> u64 {
    let o = s.overrides.clone().unwrap_or_default();
    [s.limit, o.limit, o.k]
        .into_iter()
        .flatten()
        .min()
        .unwrap_or(DEFAULT_SEARCH_LIMIT)
        .max(1)
}

fn resolve_search(s: &SearchSpec) -> ResolvedSearch {
    ResolvedSearch {
        query: s.intent.query.clone(),
        context: s.intent.context.clone(),
        order_by: s
            .overrides
            .as_ref()
            .and_then(|o| o.order_by)
            .unwrap_or_default(),
        limit: effective_search_limit(s),
    }
}

fn weight_change(weight: Option<f64>, delta: Option<f64>) -> Result<WeightChange, ParseError> {
    match (weight, delta) {
        (Some(w), None) => Ok(WeightChange::Set(w.clamp(0.0, 1.0))),
        (None, Some(d)) => Ok(WeightChange::Delta(d)),
        _ => Err(ParseError::BothOrNeither),
    }
}

fn inconsistent(what: &str) -> ParseError {
    ParseError::InconsistentInstance(what.to_string())
}

fn parse_args(args: &Args, anchor: Option<DateTime<Utc>>) -> Result<TypedArgs, ParseError> {
    Ok(match args {
        Args::Encode(a) => TypedArgs::Encode(EncodeSpec {
            text: a
                .payload
                .as_ref()
                .map(|p| p.text.clone())
                .ok_or_else(|| inconsistent("missing payload"))?,
            tags: dedup_preserving_order(a.tags.as_deref().unwrap_or_default()),
            item_type: a
                .item_type
                .clone()
                .unwrap_or_else(|| DEFAULT_ITEM_TYPE.to_string()),
            time: a.time.map(|t| t.utc()),
            source: a.source.clone(),
            location: a.location.clone(),
            facets: a.facets.clone().unwrap_or_default(),
            use_embedding: a.use_embedding.unwrap_or(true),
        }),
        Args::Update(a) => TypedArgs::Update(field_patch(&a.set)?),
        Args::Label(a) => TypedArgs::Label(LabelSpec {
            tags: dedup_preserving_order(a.tags.as_deref().unwrap_or_default()),
            facets: a.facets.clone().unwrap_or_default(),
            mode: a.mode.unwrap_or_default(),
        }),
        Args::Promote(a) => TypedArgs::Promote(PromoteSpec {
            change: weight_change(a.weight, a.weight_delta)?,
            reminder: a.reminder.as_ref().map(|r| match (&r.at, &r.cadence) {
                (Some(at), _) => ReminderSpec::At(at.utc()),
                (None, Some(c)) => ReminderSpec::Cadence(c.to_string()),
                (None, None) => unreachable!("validator requires cadence or at"),
            }),
        }),
        Args::Demote(a) => TypedArgs::Demote(DemoteSpec {
            change: weight_change(a.weight, a.weight_delta)?,
            archive: a.archive.unwrap_or(false),
        }),
        Args::Merge(a) => TypedArgs::Merge(MergeSpec {
            strategy: a
                .strategy
                .clone()
                .unwrap_or_else(|| DEFAULT_MERGE_STRATEGY.to_string()),
            delete_children: a.delete_children.unwrap_or(false),
        }),
        Args::Delete(a) => TypedArgs::Delete {
            mode: a.mode.unwrap_or_default(),
        },
        Args::Split(a) => TypedArgs::Split(match a.strategy.unwrap_or_default() {
            SplitStrategyName::Sentences => SplitStrategy::Sentences,
            SplitStrategyName::Chunks => SplitStrategy::Chunks {
                size: a.chunk_size.unwrap_or(DEFAULT_CHUNK_SIZE) as usize,
            },
        }),
        Args::Lock(a) => {
            let policy = a.policy.clone().unwrap_or_default();
            TypedArgs::Lock(LockSpec {
                mode: a
                    .mode
                    .as_deref()
                    .and_then(LockMode::parse)
                    .ok_or_else(|| inconsistent("lock mode"))?,
                reason: a.reason.clone().unwrap_or_default(),
                policy: PolicySpec {
                    allow: policy.allow.unwrap_or_default(),
                    deny: policy.deny.unwrap_or_default(),
                    reviewers: policy.reviewers.unwrap_or_default(),
                    expires: policy.expires.map(|t| t.utc()),
                },
            })
        }
        Args::Expire(a) => {
            let until = match (&a.until, &a.ttl) {
                (Some(u), _) => u.utc(),
                (None, Some(ttl)) => ttl.add_to(anchor.ok_or(ParseError::UnresolvableTime)?)?,
                (None, None) => return Err(inconsistent("expire horizon")),
            };
            TypedArgs::Expire(ExpireSpec {
                until,
                on_expire: a.on_expire.ok_or_else(|| inconsistent("on_expire"))?,
            })
        }
        Args::Retrieve(a) => TypedArgs::Retrieve(RetrieveSpec {
            fields: a.fields.as_deref().map(dedup_preserving_order),
        }),
        Args::Summarize(a) => TypedArgs::Summarize(SummarizeSpec {
            focus: a.focus.clone().unwrap_or_default(),
            max_tokens: a.max_tokens.unwrap_or(DEFAULT_MAX_TOKENS),
        }),
    })
}

fn field_patch(set: &BTreeMap<String, Value>) -> Result<FieldPatch, ParseError> {
    let string = |k: &str| set.get(k).and_then(Value::as_str).map(str::to_string);
    let mut patch = FieldPatch {
        text: string("text"),
        item_type: string("type"),
        source: string("source"),
        actor: string("actor"),
        location: string("location"),
        weight: set
            .get("weight")
            .and_then(Value::as_f64)
            .map(|w| w.clamp(0.0, 1.0)),
        ..FieldPatch::default()
    };
    if let Some(v) = set.get("tags") {
        let tags: Vec<String> =
            serde_json::from_value(v.clone()).map_err(|_| inconsistent("set.tags"))?;
        patch.tags = Some(dedup_preserving_order(&tags));
    }
    if let Some(v) = set.get("facets") {
        patch.facets =
            Some(serde_json::from_value(v.clone()).map_err(|_| inconsistent("set.facets"))?);
    }
    if let Some(v) = set.get("time") {
        let t = v
            .as_str()
            .ok_or_else(|| inconsistent("set.time"))
            .and_then(|s| Timestamp::parse(s).map_err(ParseError::from))?;
        patch.time = Some(t.utc());
    }
    Ok(patch)
}
