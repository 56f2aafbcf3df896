//! Per-verb expectation templates, evaluated against the store state taken
//! just before and just after the op they are bound to.

use std::collections::BTreeSet;

use chrono::{DateTime, Utc};
use memop_core::adapter::{Backend, ExecutionResult};
use memop_core::schema::{parse_utc, render_utc, LockMode, OpKind};
use memop_core::services::cosine;
use memop_core::store::{MemoryItem, StoreSnapshot, TriggerKind};
use memop_core::typed::{FieldPatch, TypedArgs, TypedOp};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

/// Summary similarity threshold used when an assertion does not carry one.
pub const DEFAULT_TAU: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub op_index: usize,
    #[serde(flatten)]
    pub check: Check,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Check {
    /// Change in the number of live (not deleted) items.
    CountDelta {
        expected: i64,
    },
    /// Every listed field holds its expected value and lineage is untouched.
    UpdateApplied {
        ids: Vec<String>,
        set: Map<String, Value>,
    },
    /// Tags stay distinct and differ from the prior tag set.
    LabelChanged {
        ids: Vec<String>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        present: Vec<String>,
    },
    WeightIncreasedOrTrigger {
        ids: Vec<String>,
    },
    WeightDecreasedActive {
        ids: Vec<String>,
    },
    /// All sources point at the same newly created primary.
    MergedIntoPrimary {
        sources: Vec<String>,
    },
    /// More than one new child whose parent is `source`.
    SplitChildren {
        source: String,
    },
    LockMode {
        ids: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mode: Option<LockMode>,
    },
    ExpiryWithTrigger {
        ids: Vec<String>,
    },
    /// The op's result ids equal `ids`; with `ordered`, position by position.
    RetrieveMatches {
        ids: Vec<String>,
        #[serde(default = "default_true")]
        ordered: bool,
    },
    /// A new summary item exists whose similarity to its sources is at least tau.
    SummarySimilarity {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tau: Option<f64>,
    },
    /// A read-only scalar query over the store tables.
    Sql {
        query: String,
        expected: Value,
    },
}

fn default_true() -> bool {
    true
}

impl Check {
    pub fn kind(&self) -> &'static str {
        match self {
            Check::CountDelta { .. } => "count_delta",
            Check::UpdateApplied { .. } => "update_applied",
            Check::LabelChanged { .. } => "label_changed",
            Check::WeightIncreasedOrTrigger { .. } => "weight_increased_or_trigger",
            Check::WeightDecreasedActive { .. } => "weight_decreased_active",
            Check::MergedIntoPrimary { .. } => "merged_into_primary",
            Check::SplitChildren { .. } => "split_children",
            Check::LockMode { .. } => "lock_mode",
            Check::ExpiryWithTrigger { .. } => "expiry_with_trigger",
            Check::RetrieveMatches { .. } => "retrieve_matches",
            Check::SummarySimilarity { .. } => "summary_similarity",
            Check::Sql { .. } => "sql",
        }
    }
}

/// Everything an assertion may look at.
pub struct EvalInput<'a> {
    pub before: &'a StoreSnapshot,
    pub after: &'a StoreSnapshot,
    pub result: &'a ExecutionResult,
    pub backend: &'a dyn Backend,
    pub now: DateTime<Utc>,
    pub default_tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub satisfied: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<Value>,
}

impl Verdict {
    fn bare(satisfied: bool) -> Self {
        Verdict {
            satisfied,
            detail: None,
        }
    }

    fn with(satisfied: bool, detail: Value) -> Self {
        Verdict {
            satisfied,
            detail: Some(detail),
        }
    }
}

fn each<'a>(
    ids: &[String],
    before: &'a StoreSnapshot,
    after: &'a StoreSnapshot,
    mut f: impl FnMut(&'a MemoryItem, &'a MemoryItem) -> bool,
) -> bool {
    !ids.is_empty()
        && ids.iter().all(|id| match (before.get(id), after.get(id)) {
            (Some(b), Some(a)) => f(b, a),
            _ => false,
        })
}

/// Structural equality where numbers compare by value and timestamps by
/// instant, so that `0.9` matches `0.90` and `+08:00` matches `Z`.
pub fn values_match(actual: &Value, expected: &Value) -> bool {
    match (actual, expected) {
        (Value::Number(a), Value::Number(b)) => a.as_f64() == b.as_f64(),
        (Value::String(a), Value::String(b)) => {
            a == b || matches!((parse_utc(a), parse_utc(b)), (Ok(x), Ok(y)) if x == y)
        }
        (Value::Array(a), Value::Array(b)) => {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| values_match(x, y))
        }
        (Value::Object(a), Value::Object(b)) => {
            a.len() == b.len()
                && a.iter()
                    .all(|(k, v)| b.get(k).is_some_and(|w| values_match(v, w)))
        }
        _ => actual == expected,
    }
}

fn reminder_count(s: &StoreSnapshot, id: &str) -> usize {
    s.triggers_for(id)
        .filter(|t| t.kind == TriggerKind::Reminder)
        .count()
}

/// Kendall rank correlation over the ids both lists share.
pub fn kendall_tau(actual: &[String], expected: &[String]) -> Option<f64> {
    let common: Vec<&String> = expected.iter().filter(|id| actual.contains(id)).collect();
    let n = common.len();
    if n < 2 {
        return None;
    }
    let pos = |id: &String| actual.iter().position(|x| x == id).expect("common id");
    let mut concordant = 0i64;
    let mut discordant = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            if pos(common[i]) < pos(common[j]) {
                concordant += 1;
            } else {
                discordant += 1;
            }
        }
    }
    Some((concordant - discordant) as f64 / (concordant + discordant) as f64)
}

fn summary_similarity(input: &EvalInput<'_>) -> Option<(String, f64)> {
    let services = input.backend.services();
    let (id, summary) = input
        .after
        .items
        .iter()
        .find(|(id, it)| it.item_type == "summary" && !input.before.items.contains_key(*id))?;
    let texts: Vec<String> = summary
        .lineage
        .child_ids
        .iter()
        .filter_map(|r| input.before.get(r).or_else(|| input.after.get(r)))
        .map(|it| it.text.clone())
        .collect();
    if texts.is_empty() {
        return None;
    }
    let sv = services.embed(&summary.text).ok()?;
    let rv = services.embed(&texts.join(" ")).ok()?;
    Some((id.clone(), cosine(&sv, &rv)))
}

impl Check {
    /// Evaluates the check for an op that completed with status ok.
    pub fn evaluate(&self, input: &EvalInput<'_>) -> Verdict {
        let (before, after) = (input.before, input.after);
        match self {
            Check::CountDelta { expected } => {
                let delta = after.active_count() as i64 - before.active_count() as i64;
                Verdict::with(delta == *expected, json!({ "delta": delta }))
            }
            Check::UpdateApplied { ids, set } => Verdict::bare(each(ids, before, after, |b, a| {
                let view = serde_json::to_value(a).expect("item serializes");
                b.lineage == a.lineage
                    && set
                        .iter()
                        .all(|(k, v)| view.get(k).is_some_and(|actual| values_match(actual, v)))
            })),
            Check::LabelChanged { ids, present } => {
                Verdict::bare(each(ids, before, after, |b, a| {
                    let distinct: BTreeSet<&String> = a.tags.iter().collect();
                    distinct.len() == a.tags.len()
                        && a.tags != b.tags
                        && present.iter().all(|t| a.tags.contains(t))
                }))
            }
            Check::WeightIncreasedOrTrigger { ids } => {
                Verdict::bare(each(ids, before, after, |b, a| {
                    a.weight > b.weight
                        || reminder_count(after, &a.id) > reminder_count(before, &b.id)
                }))
            }
            Check::WeightDecreasedActive { ids } => {
                Verdict::bare(each(ids, before, after, |b, a| {
                    a.weight < b.weight && !a.deleted
                }))
            }
            Check::MergedIntoPrimary { sources } => {
                let primaries: BTreeSet<Option<&String>> = sources
                    .iter()
                    .map(|s| after.get(s).and_then(|i| i.lineage.merged_into.as_ref()))
                    .collect();
                let ok = match primaries.iter().collect::<Vec<_>>().as_slice() {
                    [Some(p)] => after.get(p).is_some() && before.get(p).is_none(),
                    _ => false,
                };
                Verdict::bare(ok && sources.len() >= 2)
            }
            Check::SplitChildren { source } => {
                let children = after
                    .items
                    .values()
                    .filter(|i| !before.items.contains_key(&i.id))
                    .filter(|i| i.lineage.parent_id.as_deref() == Some(source.as_str()))
                    .count();
                Verdict::with(children > 1, json!({ "children": children }))
            }
            Check::LockMode { ids, mode } => Verdict::bare(each(ids, before, after, |_, a| {
                a.active_lock(&input.now)
                    .is_some_and(|l| mode.is_none_or(|m| l.mode == m))
            })),
            Check::ExpiryWithTrigger { ids } => Verdict::bare(each(ids, before, after, |_, a| {
                a.expiry.is_some()
                    && after
                        .triggers_for(&a.id)
                        .any(|t| t.kind == TriggerKind::Expire && !t.fired)
            })),
            Check::RetrieveMatches { ids, ordered } => {
                let actual = &input.result.affected_ids;
                let ok = if *ordered {
                    actual == ids
                } else {
                    actual.iter().collect::<BTreeSet<_>>() == ids.iter().collect::<BTreeSet<_>>()
                        && actual.len() == ids.len()
                };
                let detail = json!({ "actual": actual, "kendall_tau": kendall_tau(actual, ids) });
                Verdict::with(ok, detail)
            }
            Check::SummarySimilarity { tau } => {
                let tau = tau.unwrap_or(input.default_tau);
                match summary_similarity(input) {
                    Some((id, sim)) => Verdict::with(
                        sim >= tau,
                        json!({ "summary_id": id, "similarity": sim, "tau": tau }),
                    ),
                    None => Verdict::with(false, json!({ "summary_id": null, "tau": tau })),
                }
            }
            Check::Sql { query, expected } => match input.backend.query_scalar(query) {
                Ok(v) => {
                    let ok = values_match(&v, expected);
                    Verdict::with(ok, json!({ "actual": v }))
                }
                Err(e) => Verdict::with(false, json!({ "error": e.to_string() })),
            },
        }
    }
}

fn patch_values(p: &FieldPatch) -> Map<String, Value> {
    let mut m = Map::new();
    let mut put = |k: &str, v: Option<Value>| {
        if let Some(v) = v {
            m.insert(k.to_string(), v);
        }
    };
    put("text", p.text.clone().map(Value::from));
    put("type", p.item_type.clone().map(Value::from));
    put("tags", p.tags.clone().map(|t| json!(t)));
    put("facets", p.facets.clone().map(|f| json!(f)));
    put("weight", p.weight.map(|w| json!(w)));
    put("time", p.time.map(|t| Value::from(render_utc(&t))));
    put("source", p.source.clone().map(Value::from));
    put("actor", p.actor.clone().map(Value::from));
    put("location", p.location.clone().map(Value::from));
    m
}

/// Instantiates the template for `op`'s verb. `target_ids` are the ids the
/// op resolved to; for Retrieve they are the expected ranking.
pub fn bind_assertions(
    op_index: usize,
    op: &TypedOp,
    target_ids: &[String],
    tau: f64,
) -> Vec<Assertion> {
    let ids = target_ids.to_vec();
    let check = match &op.args {
        TypedArgs::Encode(_) => Check::CountDelta { expected: 1 },
        TypedArgs::Update(p) => Check::UpdateApplied {
            ids,
            set: patch_values(p),
        },
        TypedArgs::Label(_) => Check::LabelChanged {
            ids,
            present: Vec::new(),
        },
        TypedArgs::Promote(_) => Check::WeightIncreasedOrTrigger { ids },
        TypedArgs::Demote(_) => Check::WeightDecreasedActive { ids },
        TypedArgs::Merge(_) => Check::MergedIntoPrimary { sources: ids },
        TypedArgs::Delete { .. } => Check::CountDelta {
            expected: -(ids.len() as i64),
        },
        TypedArgs::Split(_) => Check::SplitChildren {
            source: ids.first().cloned().unwrap_or_default(),
        },
        TypedArgs::Lock(l) => Check::LockMode {
            ids,
            mode: Some(l.mode),
        },
        TypedArgs::Expire(_) => Check::ExpiryWithTrigger { ids },
        TypedArgs::Retrieve(_) => Check::RetrieveMatches { ids, ordered: true },
        TypedArgs::Summarize(_) => Check::SummarySimilarity { tau: Some(tau) },
    };
    vec![Assertion { op_index, check }]
}

/// The ids an executed op acted on, in the form [`bind_assertions`] expects.
pub fn bound_targets(op: OpKind, result: &ExecutionResult) -> Vec<String> {
    match op {
        OpKind::Merge => result.affected_ids.iter().skip(1).cloned().collect(),
        OpKind::Split => result.affected_ids.iter().take(1).cloned().collect(),
        OpKind::Summarize => result
            .payload
            .get("refs")
            .and_then(|r| serde_json::from_value(r.clone()).ok())
            .unwrap_or_default(),
        _ => result.affected_ids.clone(),
    }
}
