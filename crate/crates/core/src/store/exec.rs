use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use chrono::{DateTime, Utc};
use rusqlite::Connection;
use serde_json::{json, Map, Value};

use super::db::{self, EdgeKind, NewTrigger};
use super::item::{
    Expiry, Lineage, LockRecord, MemoryItem, TriggerKind, ARCHIVED_FACET, DEFAULT_WEIGHT,
    SPLIT_FACET,
};
use super::score::{lexical_overlap, score_item};
use super::{ExecError, StoreConfig};
use crate::schema::{DeleteMode, LabelMode, LockMode, OnExpire, OpKind, OrderBy};
use crate::services::{cosine, ModelServices};
use crate::text::{chunks, sentences};
use crate::typed::{
    dedup_preserving_order, DemoteSpec, EncodeSpec, ExpireSpec, FieldPatch, LabelSpec, LockSpec,
    MergeSpec, PromoteSpec, ReminderSpec, ResolvedFilter, ResolvedSearch, ResolvedTarget,
    RetrieveSpec, SplitStrategy, SummarizeSpec, TypedArgs, TypedOp,
};
use crate::validate::Diagnostic;

/// Facet keys the `anonymize` expiry action removes.
pub const ENTITY_FACETS: [&str; 9] = [
    "person",
    "people",
    "owner",
    "assignee",
    "customer",
    "contact",
    "email",
    "phone",
    "participants",
];

pub struct Outcome {
    pub affected_ids: Vec<String>,
    pub payload: Value,
    pub warnings: Vec<Diagnostic>,
}

impl Outcome {
    fn new(affected_ids: Vec<String>, payload: Value) -> Self {
        Outcome {
            affected_ids,
            payload,
            warnings: Vec::new(),
        }
    }
}

pub struct Ctx<'a> {
    conn: &'a Connection,
    services: &'a dyn ModelServices,
    config: &'a StoreConfig,
    now: DateTime<Utc>,
    actor: Option<String>,
    items: Vec<MemoryItem>,
    index: HashMap<String, usize>,
}

impl<'a> Ctx<'a> {
    pub fn load(
        conn: &'a Connection,
        services: &'a dyn ModelServices,
        config: &'a StoreConfig,
        now: DateTime<Utc>,
        actor: Option<String>,
    ) -> Result<Self, ExecError> {
        let items = db::load_items(conn)?;
        let index = items
            .iter()
            .enumerate()
            .map(|(i, it)| (it.id.clone(), i))
            .collect();
        Ok(Ctx {
            conn,
            services,
            config,
            now,
            actor,
            items,
            index,
        })
    }

    fn item(&self, id: &str) -> &MemoryItem {
        &self.items[self.index[id]]
    }

    fn item_mut(&mut self, id: &str) -> &mut MemoryItem {
        let i = self.index[id];
        &mut self.items[i]
    }

    fn save(&mut self, id: &str) -> Result<(), ExecError> {
        let now = self.now;
        let item = self.item_mut(id);
        item.updated_at = now;
        db::save_item(self.conn, self.item(id))?;
        Ok(())
    }

    fn insert(&mut self, item: MemoryItem) -> Result<String, ExecError> {
        db::save_item(self.conn, &item)?;
        let id = item.id.clone();
        self.index.insert(id.clone(), self.items.len());
        self.items.push(item);
        Ok(id)
    }

    fn new_item(&self, text: String) -> Result<MemoryItem, ExecError> {
        Ok(MemoryItem {
            id: db::next_item_id(self.conn)?,
            text,
            item_type: crate::typed::DEFAULT_ITEM_TYPE.to_string(),
            tags: Vec::new(),
            facets: BTreeMap::new(),
            weight: DEFAULT_WEIGHT,
            embedding: None,
            time: self.now,
            source: None,
            actor: self.actor.clone(),
            location: None,
            lineage: Lineage::default(),
            lock: None,
            expiry: None,
            deleted: false,
            created_at: self.now,
            updated_at: self.now,
        })
    }

    /// Refuses a mutation the item's state or lock forbids. `destructive`
    /// mutations are also refused under an append_only lock.
    fn guard(&self, id: &str, op: OpKind, destructive: bool) -> Result<(), ExecError> {
        let item = self.item(id);
        if item.deleted && op != OpKind::Delete {
            return Err(ExecError::DeletedItem(id.to_string()));
        }
        if let Some(lock) = item.active_lock(&self.now) {
            let refused = lock.policy.deny.contains(&op)
                || match lock.mode {
                    LockMode::ReadOnly => true,
                    LockMode::AppendOnly => destructive,
                };
            if refused {
                return Err(ExecError::LockedItem {
                    id: id.to_string(),
                    mode: lock.mode.as_str().to_string(),
                    op,
                });
            }
        }
        Ok(())
    }

    fn check_not_expired(&self, id: &str) -> Result<(), ExecError> {
        if self.item(id).is_expired(&self.now) {
            return Err(ExecError::ExpiredItem(id.to_string()));
        }
        Ok(())
    }
}

pub fn active_count(conn: &Connection) -> Result<i64, ExecError> {
    Ok(conn.query_row(
        "SELECT COUNT(*) FROM memory_items WHERE deleted = 0",
        [],
        |r| r.get(0),
    )?)
}

/// Applies pending expiry actions for items whose `until` has passed.
/// Items under an active read_only lock are left for a later sweep.
pub fn sweep(
    conn: &Connection,
    now: &DateTime<Utc>,
    config: &StoreConfig,
) -> Result<Vec<String>, ExecError> {
    let mut swept = Vec::new();
    for mut item in db::load_items(conn)? {
        let Some(exp) = item.expiry.clone() else {
            continue;
        };
        if item.deleted || exp.applied || exp.until > *now {
            continue;
        }
        if item
            .active_lock(now)
            .is_some_and(|l| l.mode == LockMode::ReadOnly)
        {
            continue;
        }
        match exp.on_expire {
            OnExpire::DeleteSoft => item.deleted = true,
            OnExpire::Demote => item.weight = item.weight.min(config.expiry_demote_weight),
            OnExpire::Archive => {
                item.facets.insert(ARCHIVED_FACET.into(), "true".into());
            }
            OnExpire::Anonymize => {
                item.actor = None;
                item.source = None;
                item.location = None;
                item.facets
                    .retain(|k, _| !ENTITY_FACETS.contains(&k.as_str()));
            }
        }
        item.expiry = Some(Expiry {
            applied: true,
            ..exp
        });
        item.updated_at = *now;
        db::save_item(conn, &item)?;
        db::fire_expiry(conn, &item.id)?;
        swept.push(item.id);
    }
    Ok(swept)
}

fn is_visible(item: &MemoryItem, include_archived: bool) -> bool {
    let swept = item.expiry.as_ref().is_some_and(|e| e.applied);
    !item.deleted && (include_archived || (!item.is_archived() && !swept))
}

fn matches_filter(item: &MemoryItem, f: &ResolvedFilter) -> bool {
    f.has_tags.iter().all(|t| item.tags.contains(t))
        && f.item_type.as_ref().is_none_or(|t| *t == item.item_type)
        && f.time.as_ref().is_none_or(|iv| iv.contains(&item.time))
        && f.weight
            .is_none_or(|(lo, hi)| lo <= item.weight && item.weight <= hi)
        && f.facets.iter().all(|(k, v)| item.facets.get(k) == Some(v))
}

fn by_time_desc(a: &MemoryItem, b: &MemoryItem) -> Ordering {
    b.time.cmp(&a.time).then(a.seq().cmp(&b.seq()))
}

/// A resolved target entry; `score` is set for search targets.
#[derive(Debug, Clone)]
struct Hit {
    id: String,
    score: Option<f64>,
}

fn resolve(ctx: &Ctx<'_>, op: &TypedOp) -> Result<Vec<Hit>, ExecError> {
    let read = op.stage == crate::schema::Stage::Ret;
    let target = op.target.as_ref().ok_or(ExecError::MissingTarget(op.op))?;
    let hits = match target {
        ResolvedTarget::Ids(ids) => {
            let missing: Vec<String> = ids
                .iter()
                .filter(|id| !ctx.index.contains_key(*id))
                .cloned()
                .collect();
            if !missing.is_empty() {
                return Err(ExecError::UnknownId(missing));
            }
            ids.iter()
                .filter(|id| !read || is_visible(ctx.item(id), false))
                .map(|id| Hit {
                    id: id.clone(),
                    score: None,
                })
                .collect()
        }
        ResolvedTarget::Filter(f) => {
            let include_archived = f.facets.contains_key(ARCHIVED_FACET);
            let mut found: Vec<&MemoryItem> = ctx
                .items
                .iter()
                .filter(|i| {
                    !i.deleted && (!read || is_visible(i, include_archived)) && matches_filter(i, f)
                })
                .collect();
            found.sort_by(|a, b| by_time_desc(a, b));
            if let Some(limit) = f.limit {
                found.truncate(limit as usize);
            }
            found
                .into_iter()
                .map(|i| Hit {
                    id: i.id.clone(),
                    score: None,
                })
                .collect()
        }
        ResolvedTarget::Search(s) => search(ctx, s),
        ResolvedTarget::All => ctx
            .items
            .iter()
            .filter(|i| !i.deleted && (!read || is_visible(i, false)))
            .map(|i| Hit {
                id: i.id.clone(),
                score: None,
            })
            .collect(),
    };
    Ok(hits)
}

/// Hybrid ranking over visible items. Candidates must share a query term or
/// reach `min_similarity` cosine; the top `limit` by score (ties by id) are
/// then presented in the requested order.
fn search(ctx: &Ctx<'_>, s: &ResolvedSearch) -> Vec<Hit> {
    let qv = ctx.services.embed(&s.query).ok();
    let mut scored: Vec<(&MemoryItem, f64)> = ctx
        .items
        .iter()
        .filter(|i| is_visible(i, false))
        .filter(|i| {
            let cos = match (&qv, &i.embedding) {
                (Some(q), Some(e)) if q.len() == e.len() => cosine(q, e),
                _ => 0.0,
            };
            lexical_overlap(&s.query, i) > 0.0 || cos >= ctx.config.min_similarity
        })
        .map(|i| {
            (
                i,
                score_item(&s.query, qv.as_deref(), i, &ctx.config.score_weights),
            )
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.seq().cmp(&b.0.seq())));
    scored.truncate(s.limit as usize);
    match s.order_by {
        OrderBy::Relevance => {}
        OrderBy::TimeDesc => scored.sort_by(|a, b| by_time_desc(a.0, b.0)),
        OrderBy::TimeAsc => {
            scored.sort_by(|a, b| a.0.time.cmp(&b.0.time).then(a.0.seq().cmp(&b.0.seq())))
        }
    }
    scored
        .into_iter()
        .map(|(i, sc)| Hit {
            id: i.id.clone(),
            score: Some(sc),
        })
        .collect()
}

fn ids(hits: &[Hit]) -> Vec<String> {
    hits.iter().map(|h| h.id.clone()).collect()
}

pub fn execute(ctx: &mut Ctx<'_>, op: &TypedOp) -> Result<Outcome, ExecError> {
    if let TypedArgs::Encode(spec) = &op.args {
        return encode(ctx, op, spec);
    }
    let hits = resolve(ctx, op)?;
    let targets = ids(&hits);
    match &op.args {
        TypedArgs::Encode(_) => unreachable!("handled above"),
        TypedArgs::Update(p) => update(ctx, &targets, p),
        TypedArgs::Label(l) => label(ctx, &targets, l),
        TypedArgs::Promote(p) => promote(ctx, &targets, p),
        TypedArgs::Demote(d) => demote(ctx, &targets, d),
        TypedArgs::Merge(m) => merge(ctx, &targets, m),
        TypedArgs::Delete { mode } => delete(ctx, &targets, *mode),
        TypedArgs::Split(s) => split(ctx, &targets, *s),
        TypedArgs::Lock(l) => lock(ctx, &targets, l),
        TypedArgs::Expire(e) => expire(ctx, &targets, e),
        TypedArgs::Retrieve(r) => Ok(retrieve(ctx, &hits, r)),
        TypedArgs::Summarize(s) => summarize(ctx, &targets, s),
    }
}

fn encode(ctx: &mut Ctx<'_>, op: &TypedOp, spec: &EncodeSpec) -> Result<Outcome, ExecError> {
    let embedding = if spec.use_embedding {
        Some(ctx.services.embed(&spec.text)?)
    } else {
        None
    };
    let mut item = ctx.new_item(spec.text.clone())?;
    item.item_type = spec.item_type.clone();
    item.tags = dedup_preserving_order(&spec.tags);
    item.facets = spec.facets.clone();
    item.embedding = embedding;
    item.time = spec.time.or(op.meta.timestamp).unwrap_or(ctx.now);
    item.source = spec.source.clone();
    item.location = spec.location.clone();
    let id = ctx.insert(item)?;
    Ok(Outcome::new(vec![id.clone()], json!({ "id": id })))
}

fn update(ctx: &mut Ctx<'_>, targets: &[String], p: &FieldPatch) -> Result<Outcome, ExecError> {
    let mut fields = Vec::new();
    let mut note = |name: &str, set: bool| {
        if set {
            fields.push(name.to_string());
        }
    };
    note("text", p.text.is_some());
    note("type", p.item_type.is_some());
    note("tags", p.tags.is_some());
    note("facets", p.facets.is_some());
    note("weight", p.weight.is_some());
    note("time", p.time.is_some());
    note("source", p.source.is_some());
    note("actor", p.actor.is_some());
    note("location", p.location.is_some());
    if fields.is_empty() {
        return Err(ExecError::EmptyPatch);
    }
    for id in targets {
        ctx.check_not_expired(id)?;
        ctx.guard(id, OpKind::Update, true)?;
        let embedding = match (&p.text, &ctx.item(id).embedding) {
            (Some(t), Some(_)) => Some(ctx.services.embed(t)?),
            _ => None,
        };
        let item = ctx.item_mut(id);
        if let Some(t) = &p.text {
            item.text = t.clone();
        }
        if embedding.is_some() {
            item.embedding = embedding;
        }
        if let Some(t) = &p.item_type {
            item.item_type = t.clone();
        }
        if let Some(t) = &p.tags {
            item.tags = dedup_preserving_order(t);
        }
        if let Some(f) = &p.facets {
            item.facets = f.clone();
        }
        if let Some(w) = p.weight {
            item.weight = w.clamp(0.0, 1.0);
        }
        if let Some(t) = p.time {
            item.time = t;
        }
        if let Some(s) = &p.source {
            item.source = Some(s.clone());
        }
        if let Some(a) = &p.actor {
            item.actor = Some(a.clone());
        }
        if let Some(l) = &p.location {
            item.location = Some(l.clone());
        }
        ctx.save(id)?;
    }
    Ok(Outcome::new(targets.to_vec(), json!({ "fields": fields })))
}

fn label(ctx: &mut Ctx<'_>, targets: &[String], l: &LabelSpec) -> Result<Outcome, ExecError> {
    let mut out = Map::new();
    for id in targets {
        ctx.guard(id, OpKind::Label, l.mode != LabelMode::Add)?;
        let item = ctx.item_mut(id);
        match l.mode {
            LabelMode::Add => {
                let mut tags = item.tags.clone();
                tags.extend(l.tags.iter().cloned());
                item.tags = dedup_preserving_order(&tags);
                item.facets.extend(l.facets.clone());
            }
            LabelMode::Replace => {
                if !l.tags.is_empty() {
                    item.tags = dedup_preserving_order(&l.tags);
                }
                if !l.facets.is_empty() {
                    item.facets = l.facets.clone();
                }
            }
            LabelMode::Remove => {
                item.tags.retain(|t| !l.tags.contains(t));
                item.facets.retain(|k, _| !l.facets.contains_key(k));
            }
        }
        out.insert(
            id.clone(),
            json!({ "tags": item.tags, "facets": item.facets }),
        );
        ctx.save(id)?;
    }
    Ok(Outcome::new(targets.to_vec(), json!({ "items": out })))
}

fn weight_warning(code: &str, message: String) -> Diagnostic {
    Diagnostic::new(code, "/args", "runtime", message)
}

fn promote(ctx: &mut Ctx<'_>, targets: &[String], p: &PromoteSpec) -> Result<Outcome, ExecError> {
    let mut weights = Map::new();
    let mut triggers = Vec::new();
    let mut lowered = Vec::new();
    for id in targets {
        ctx.guard(id, OpKind::Promote, false)?;
        let item = ctx.item_mut(id);
        let old = item.weight;
        item.weight = p.change.apply(old);
        if item.weight < old {
            lowered.push(id.clone());
        }
        weights.insert(id.clone(), json!(item.weight));
        ctx.save(id)?;
        if let Some(r) = &p.reminder {
            let (at, cadence) = match r {
                ReminderSpec::At(t) => (Some(*t), None),
                ReminderSpec::Cadence(c) => (None, Some(c.clone())),
            };
            let t = NewTrigger {
                item_id: id,
                kind: TriggerKind::Reminder,
                at,
                cadence,
                action: None,
            };
            triggers.push(db::add_trigger(ctx.conn, t, &ctx.now)?);
        }
    }
    let mut out = Outcome::new(
        targets.to_vec(),
        json!({ "weights": weights, "triggers": triggers }),
    );
    if !lowered.is_empty() {
        out.warnings.push(weight_warning(
            "W_PROMOTE_LOWERS_WEIGHT",
            format!("promote lowered the weight of {}", lowered.join(", ")),
        ));
    }
    Ok(out)
}

fn demote(ctx: &mut Ctx<'_>, targets: &[String], d: &DemoteSpec) -> Result<Outcome, ExecError> {
    let mut weights = Map::new();
    let mut raised = Vec::new();
    for id in targets {
        ctx.guard(id, OpKind::Demote, false)?;
        let item = ctx.item_mut(id);
        let old = item.weight;
        item.weight = d.change.apply(old);
        if item.weight > old {
            raised.push(id.clone());
        }
        if d.archive {
            item.facets.insert(ARCHIVED_FACET.into(), "true".into());
        }
        weights.insert(id.clone(), json!(item.weight));
        ctx.save(id)?;
    }
    let mut out = Outcome::new(
        targets.to_vec(),
        json!({ "weights": weights, "archived": d.archive }),
    );
    if !raised.is_empty() {
        out.warnings.push(weight_warning(
            "W_DEMOTE_RAISES_WEIGHT",
            format!("demote raised the weight of {}", raised.join(", ")),
        ));
    }
    Ok(out)
}

fn merge(ctx: &mut Ctx<'_>, targets: &[String], m: &MergeSpec) -> Result<Outcome, ExecError> {
    if targets.len() < 2 {
        return Err(ExecError::TooFewSources(targets.len()));
    }
    for id in targets {
        ctx.guard(id, OpKind::Merge, m.delete_children)?;
    }
    let sources: Vec<MemoryItem> = targets.iter().map(|id| ctx.item(id).clone()).collect();
    let texts: Vec<String> = sources.iter().map(|s| s.text.clone()).collect();
    let merged = ctx.services.merge_text(&texts)?;
    let embedding = if sources.iter().any(|s| s.embedding.is_some()) {
        Some(ctx.services.embed(&merged)?)
    } else {
        None
    };
    let first = &sources[0];
    let mut primary = ctx.new_item(merged)?;
    primary.item_type = first.item_type.clone();
    let tags: Vec<String> = sources
        .iter()
        .flat_map(|s| s.tags.iter().cloned())
        .collect();
    primary.tags = dedup_preserving_order(&tags);
    for s in sources.iter().rev() {
        primary.facets.extend(s.facets.clone());
    }
    primary.weight = sources.iter().map(|s| s.weight).fold(0.0, f64::max);
    primary.time = sources.iter().map(|s| s.time).min().expect("non-empty");
    primary.embedding = embedding;
    primary.source = first.source.clone();
    primary.location = first.location.clone();
    primary.lineage.child_ids = targets.to_vec();
    let pid = ctx.insert(primary)?;
    for id in targets {
        db::add_edge(ctx.conn, &pid, id, EdgeKind::Merge)?;
        let item = ctx.item_mut(id);
        item.lineage.merged_into = Some(pid.clone());
        if m.delete_children {
            item.deleted = true;
        }
        ctx.save(id)?;
    }
    let mut affected = vec![pid.clone()];
    affected.extend(targets.iter().cloned());
    Ok(Outcome::new(
        affected,
        json!({ "primary_id": pid, "sources": targets, "strategy": m.strategy }),
    ))
}

fn delete(ctx: &mut Ctx<'_>, targets: &[String], mode: DeleteMode) -> Result<Outcome, ExecError> {
    for id in targets {
        let item = ctx.item(id);
        match mode {
            DeleteMode::Soft => {
                if !item.deleted {
                    ctx.guard(id, OpKind::Delete, true)?;
                }
            }
            DeleteMode::Hard => {
                if let Some(lock) = item.active_lock(&ctx.now) {
                    return Err(ExecError::LockedItem {
                        id: id.clone(),
                        mode: lock.mode.as_str().to_string(),
                        op: OpKind::Delete,
                    });
                }
            }
        }
    }
    for id in targets {
        match mode {
            DeleteMode::Soft => {
                if !ctx.item(id).deleted {
                    ctx.item_mut(id).deleted = true;
                    ctx.save(id)?;
                }
            }
            DeleteMode::Hard => db::purge_item(ctx.conn, id)?,
        }
    }
    let mode = match mode {
        DeleteMode::Soft => "soft",
        DeleteMode::Hard => "hard",
    };
    Ok(Outcome::new(
        targets.to_vec(),
        json!({ "mode": mode, "ids": targets }),
    ))
}

fn split(
    ctx: &mut Ctx<'_>,
    targets: &[String],
    strategy: SplitStrategy,
) -> Result<Outcome, ExecError> {
    let [id] = targets else {
        return Err(ExecError::SplitArity(targets.len()));
    };
    ctx.guard(id, OpKind::Split, false)?;
    let source = ctx.item(id).clone();
    let pieces = match strategy {
        SplitStrategy::Sentences => sentences(&source.text),
        SplitStrategy::Chunks { size } => chunks(&source.text, size),
    };
    if pieces.len() < 2 {
        return Err(ExecError::NotSplittable(id.clone()));
    }
    let mut children = Vec::new();
    for piece in pieces {
        let embedding = match source.embedding {
            Some(_) => Some(ctx.services.embed(&piece)?),
            None => None,
        };
        let mut child = ctx.new_item(piece)?;
        child.item_type = source.item_type.clone();
        child.tags = source.tags.clone();
        child.facets = source.facets.clone();
        child.facets.remove(SPLIT_FACET);
        child.weight = source.weight;
        child.embedding = embedding;
        child.time = source.time;
        child.source = source.source.clone();
        child.location = source.location.clone();
        if child.actor.is_none() {
            child.actor = source.actor.clone();
        }
        child.lineage.parent_id = Some(id.clone());
        let cid = ctx.insert(child)?;
        db::add_edge(ctx.conn, id, &cid, EdgeKind::Split)?;
        children.push(cid);
    }
    let src = ctx.item_mut(id);
    src.facets.insert(SPLIT_FACET.into(), "true".into());
    src.lineage.child_ids.extend(children.iter().cloned());
    ctx.save(id)?;
    let mut affected = vec![id.clone()];
    affected.extend(children.iter().cloned());
    Ok(Outcome::new(
        affected,
        json!({ "source_id": id, "children": children }),
    ))
}

fn lock(ctx: &mut Ctx<'_>, targets: &[String], l: &LockSpec) -> Result<Outcome, ExecError> {
    for id in targets {
        let item = ctx.item(id);
        if item.deleted {
            return Err(ExecError::DeletedItem(id.clone()));
        }
        if let Some(existing) = item.active_lock(&ctx.now) {
            if existing.mode != l.mode {
                return Err(ExecError::AlreadyLocked {
                    id: id.clone(),
                    mode: existing.mode.as_str().to_string(),
                });
            }
        }
    }
    for id in targets {
        let rec = LockRecord {
            mode: l.mode,
            reason: l.reason.clone(),
            policy: l.policy.clone(),
            created_at: ctx.now,
        };
        db::put_lock(ctx.conn, id, &rec)?;
        ctx.item_mut(id).lock = Some(rec);
    }
    Ok(Outcome::new(
        targets.to_vec(),
        json!({ "mode": l.mode.as_str(), "ids": targets }),
    ))
}

fn expire(ctx: &mut Ctx<'_>, targets: &[String], e: &ExpireSpec) -> Result<Outcome, ExecError> {
    for id in targets {
        ctx.check_not_expired(id)?;
        ctx.guard(id, OpKind::Expire, false)?;
        db::clear_pending_expiry(ctx.conn, id)?;
        ctx.item_mut(id).expiry = Some(Expiry {
            until: e.until,
            on_expire: e.on_expire,
            applied: false,
        });
        ctx.save(id)?;
        let t = NewTrigger {
            item_id: id,
            kind: TriggerKind::Expire,
            at: Some(e.until),
            cadence: None,
            action: Some(e.on_expire.as_str().to_string()),
        };
        db::add_trigger(ctx.conn, t, &ctx.now)?;
    }
    Ok(Outcome::new(
        targets.to_vec(),
        json!({ "until": crate::schema::render_utc(&e.until), "on_expire": e.on_expire.as_str() }),
    ))
}

fn readable(ctx: &Ctx<'_>, id: &str, op: OpKind) -> bool {
    ctx.item(id)
        .active_lock(&ctx.now)
        .is_none_or(|l| l.permits_read(op))
}

/// Public view of an item: everything but the embedding and the deleted flag.
fn item_view(item: &MemoryItem, score: Option<f64>, fields: Option<&[String]>) -> Value {
    let Value::Object(mut m) = serde_json::to_value(item).expect("item serializes") else {
        unreachable!("items serialize to objects")
    };
    m.remove("embedding");
    m.remove("deleted");
    if let Some(s) = score {
        m.insert("score".into(), json!(s));
    }
    if let Some(fields) = fields {
        m.retain(|k, _| k == "id" || fields.iter().any(|f| f == k));
    }
    Value::Object(m)
}

fn retrieve(ctx: &Ctx<'_>, hits: &[Hit], r: &RetrieveSpec) -> Outcome {
    let visible: Vec<&Hit> = hits
        .iter()
        .filter(|h| readable(ctx, &h.id, OpKind::Retrieve))
        .collect();
    let items: Vec<Value> = visible
        .iter()
        .map(|h| item_view(ctx.item(&h.id), h.score, r.fields.as_deref()))
        .collect();
    Outcome::new(
        visible.iter().map(|h| h.id.clone()).collect(),
        json!({ "items": items }),
    )
}

fn summarize(
    ctx: &mut Ctx<'_>,
    targets: &[String],
    s: &SummarizeSpec,
) -> Result<Outcome, ExecError> {
    let refs: Vec<String> = targets
        .iter()
        .filter(|id| readable(ctx, id, OpKind::Summarize))
        .cloned()
        .collect();
    if refs.is_empty() {
        return Err(ExecError::EmptyTarget);
    }
    let texts: Vec<String> = refs.iter().map(|id| ctx.item(id).text.clone()).collect();
    let summary = ctx
        .services
        .summarize(&texts, &s.focus, s.max_tokens as usize)?;
    let sv = ctx.services.embed(&summary)?;
    let similarity = cosine(&sv, &ctx.services.embed(&texts.join(" "))?);
    let mut item = ctx.new_item(summary.clone())?;
    item.item_type = "summary".into();
    item.embedding = Some(sv);
    item.lineage.child_ids = refs.clone();
    let sid = ctx.insert(item)?;
    for id in &refs {
        db::add_edge(ctx.conn, &sid, id, EdgeKind::Summary)?;
    }
    Ok(Outcome::new(
        vec![sid.clone()],
        json!({
            "summary_id": sid,
            "text": summary,
            "refs": refs,
            "focus": s.focus,
            "similarity": similarity,
        }),
    ))
}
