use chrono::{DateTime, Duration, Utc};
use serde_json::{json, Value};

use super::*;
use crate::adapter::{execute_value, run_values, ExecutionResult, Status};
use crate::golden;
use crate::schema::parse_utc;
use crate::services::cosine;

fn t(s: &str) -> DateTime<Utc> {
    parse_utc(s).unwrap()
}

fn now() -> DateTime<Utc> {
    t("2025-10-01T00:00:00Z")
}

fn exec(store: &mut MemoryStore, v: Value) -> ExecutionResult {
    execute_value(store, &v, now())
}

fn exec_at(store: &mut MemoryStore, v: Value, at: DateTime<Utc>) -> ExecutionResult {
    execute_value(store, &v, at)
}

fn encode(store: &mut MemoryStore, text: &str, tags: &[&str]) -> String {
    let r = exec(
        store,
        json!({"op": "Encode", "args": {"payload": {"text": text}, "tags": tags}}),
    );
    assert!(r.is_ok(), "{r:?}");
    r.affected_ids[0].clone()
}

fn golden_values(src: &[&str]) -> Vec<Value> {
    src.iter()
        .map(|s| serde_json::from_str(s).unwrap())
        .collect()
}

fn okr_store() -> (MemoryStore, [String; 3]) {
    let mut s = MemoryStore::in_memory().unwrap();
    let a = exec(
        &mut s,
        golden_values(&[golden::OKR_ENCODE_KEY_TASK])[0].clone(),
    )
    .affected_ids[0]
        .clone();
    let b = exec(
        &mut s,
        golden_values(&[golden::OKR_ENCODE_MEETING])[0].clone(),
    )
    .affected_ids[0]
        .clone();
    let c = encode(&mut s, "Vacation photo from the beach trip", &["personal"]);
    (s, [a, b, c])
}

#[test]
fn okr_workflow_promotes_only_matching_items() {
    let (mut s, [a, b, c]) = okr_store();
    let r = exec(&mut s, golden_values(&[golden::OKR_PROMOTE])[0].clone());
    assert!(r.is_ok(), "{r:?}");
    let mut hit = r.affected_ids.clone();
    hit.sort();
    assert_eq!(hit, vec![a.clone(), b.clone()]);
    assert_eq!(r.count_delta, 0);
    let snap = s.snapshot().unwrap();
    assert_eq!(snap.get(&a).unwrap().weight, 0.9);
    assert_eq!(snap.get(&b).unwrap().weight, 0.9);
    assert_eq!(snap.get(&c).unwrap().weight, DEFAULT_WEIGHT);
}

#[test]
fn golden_sequences_run_clean() {
    let mut s = MemoryStore::in_memory().unwrap();
    let rs = run_values(&mut s, &golden_values(&golden::OKR_WORKFLOW), now());
    assert!(rs.iter().all(|r| r.is_ok()), "{rs:?}");
    assert_eq!(rs[2].affected_ids.len(), 2);

    let mut s = MemoryStore::in_memory().unwrap();
    let rs = run_values(&mut s, &golden_values(&golden::INCIDENT_WORKFLOW), now());
    assert!(rs.iter().all(|r| r.is_ok()), "{rs:?}");
    let timeline = rs[0].affected_ids[0].clone();
    assert_eq!(rs[1].affected_ids, vec![timeline.clone()]);
    let item = s.get(&timeline).unwrap().unwrap();
    let lock = item.lock.unwrap();
    assert_eq!(lock.mode, crate::schema::LockMode::ReadOnly);
    assert_eq!(lock.policy.deny, vec![OpKind::Update, OpKind::Delete]);
    let p = &rs[2].payload;
    assert_eq!(p["refs"], json!([timeline]));
    assert!(p["text"].as_str().unwrap().contains("routing misconfig"));
    assert!(p["similarity"].as_f64().unwrap() >= 0.5);
    let sid = p["summary_id"].as_str().unwrap();
    let summary = s.get(sid).unwrap().unwrap();
    assert_eq!(summary.item_type, "summary");
    assert_eq!(summary.lineage.child_ids, vec![timeline]);
}

#[test]
fn fail_stop_sequence() {
    let mut s = MemoryStore::in_memory().unwrap();
    let bad = json!({"op": "Encode", "args": {}});
    let good = json!({"op": "Encode", "args": {"payload": {"text": "x"}}});
    let rs = run_values(&mut s, &[bad, good], now());
    assert_eq!(rs[0].status, Status::Error);
    assert_eq!(rs[0].codes(), vec!["E_MISSING_PAYLOAD"]);
    assert_eq!(rs[1].status, Status::Skipped);
    assert_eq!(rs[1].op, Some(OpKind::Encode));
    assert!(s.items().unwrap().is_empty());
}

#[test]
fn locked_timeline_cannot_be_hard_deleted_or_updated() {
    let mut s = MemoryStore::in_memory().unwrap();
    let rs = run_values(
        &mut s,
        &golden_values(&golden::INCIDENT_WORKFLOW[..2]),
        now(),
    );
    let id = rs[0].affected_ids[0].clone();
    let before = s.digest().unwrap();
    let r = exec(
        &mut s,
        json!({"op": "Delete", "target": {"ids": [id]}, "args": {"mode": "hard"}, "meta": {"confirmation": true}}),
    );
    assert_eq!(r.codes(), vec!["E_LOCKED"]);
    let r = exec(
        &mut s,
        json!({"op": "Update", "target": {"ids": [id]}, "args": {"set": {"type": "task"}}}),
    );
    assert_eq!(r.codes(), vec!["E_LOCKED"]);
    let r = exec(&mut s, json!({"op": "Delete", "target": {"ids": [id]}}));
    assert_eq!(r.codes(), vec!["E_LOCKED"]);
    assert_eq!(s.digest().unwrap(), before);
    // retrieval is allowed by the policy
    let r = exec(&mut s, json!({"op": "Retrieve", "target": {"ids": [id]}}));
    assert_eq!(r.affected_ids, vec![id]);
}

#[test]
fn filter_target_matches_lock_range() {
    let mut s = MemoryStore::in_memory().unwrap();
    let id =
        exec(&mut s, golden_values(&[golden::INCIDENT_ENCODE])[0].clone()).affected_ids[0].clone();
    encode(&mut s, "unrelated incident note", &["incident:p2-db"]);
    let r = exec(
        &mut s,
        json!({"op": "Retrieve", "target": {"filter": {"has_tags": ["incident:p1-network"],
            "time_range": {"start": "2025-09-28T00:00:00+08:00", "end": "2025-10-05T23:59:59+08:00"}, "limit": 200}}}),
    );
    assert_eq!(r.affected_ids, vec![id]);
}

#[test]
fn update_preserves_lineage_and_refuses_expired() {
    let mut s = MemoryStore::in_memory().unwrap();
    let id = encode(&mut s, "One. Two.", &[]);
    exec(&mut s, json!({"op": "Split", "target": {"ids": [id]}}));
    let before = s.get(&id).unwrap().unwrap();
    let r = exec(
        &mut s,
        json!({"op": "Update", "target": {"ids": [id]}, "args": {"set": {"type": "task"}}}),
    );
    assert!(r.is_ok(), "{r:?}");
    let after = s.get(&id).unwrap().unwrap();
    assert_eq!(after.item_type, "task");
    assert_eq!(after.lineage, before.lineage);

    let r = exec(
        &mut s,
        json!({"op": "Expire", "target": {"ids": [id]}, "args": {"until": "2025-10-01T01:00:00Z", "on_expire": "archive"}}),
    );
    assert!(r.is_ok(), "{r:?}");
    let later = now() + Duration::hours(2);
    let before = s.digest().unwrap();
    let r = exec_at(
        &mut s,
        json!({"op": "Update", "target": {"ids": [id]}, "args": {"set": {"type": "note"}}}),
        later,
    );
    assert_eq!(r.codes(), vec!["E_EXPIRED"]);
    assert_eq!(s.digest().unwrap(), before);
    let r = exec_at(
        &mut s,
        json!({"op": "Expire", "target": {"ids": [id]}, "args": {"ttl": "P1D", "on_expire": "archive"}}),
        later,
    );
    assert_eq!(r.codes(), vec!["E_EXPIRED"]);
}

#[test]
fn expiry_sweep_demotes_after_until() {
    let mut s = MemoryStore::in_memory().unwrap();
    let id = encode(&mut s, "temporary note", &[]);
    let r = exec(
        &mut s,
        json!({"op": "Expire", "target": {"ids": [id]}, "args": {"ttl": "PT1H", "on_expire": "demote"}}),
    );
    assert!(r.is_ok());
    let snap = s.snapshot().unwrap();
    assert_eq!(snap.triggers_for(&id).count(), 1);
    assert_eq!(
        snap.get(&id).unwrap().expiry.as_ref().unwrap().until,
        now() + Duration::hours(1)
    );

    // before until: untouched
    exec_at(
        &mut s,
        json!({"op": "Retrieve", "target": {"ids": [id]}}),
        now() + Duration::minutes(59),
    );
    assert_eq!(s.get(&id).unwrap().unwrap().weight, DEFAULT_WEIGHT);

    let r = exec_at(
        &mut s,
        json!({"op": "Retrieve", "target": {"ids": [id]}}),
        now() + Duration::hours(1),
    );
    assert!(
        r.affected_ids.is_empty(),
        "swept items are hidden from retrieval"
    );
    let item = s.get(&id).unwrap().unwrap();
    assert_eq!(item.weight, 0.1);
    assert!(item.expiry.unwrap().applied);
    assert!(s.triggers().unwrap()[0].fired);
}

#[test]
fn anonymize_blanks_provenance() {
    let mut s = MemoryStore::in_memory().unwrap();
    let r = exec(
        &mut s,
        json!({"op": "Encode", "args": {"payload": {"text": "call with Dana"}, "source": "phone",
            "location": "HQ", "facets": {"person": "Dana", "topic": "sales"}}, "meta": {"actor": "me"}}),
    );
    let id = r.affected_ids[0].clone();
    exec(
        &mut s,
        json!({"op": "Expire", "target": {"ids": [id]}, "args": {"until": "2025-10-01T00:00:00Z", "on_expire": "anonymize"}}),
    );
    exec(&mut s, json!({"op": "Retrieve", "target": {"ids": [id]}}));
    let item = s.get(&id).unwrap().unwrap();
    assert_eq!((item.actor, item.source, item.location), (None, None, None));
    assert_eq!(item.facets.len(), 1);
    assert!(item.facets.contains_key("topic"));
}

#[test]
fn merge_sets_lineage_both_ways() {
    let (mut s, [a, b, _]) = okr_store();
    let r = exec(&mut s, json!({"op": "Merge", "target": {"ids": [a, b]}}));
    assert!(r.is_ok(), "{r:?}");
    assert_eq!(r.count_delta, 1);
    let pid = r.payload["primary_id"].as_str().unwrap().to_string();
    let snap = s.snapshot().unwrap();
    let primary = snap.get(&pid).unwrap();
    assert_eq!(primary.lineage.child_ids, vec![a.clone(), b.clone()]);
    assert_eq!(primary.tags, vec!["OKR", "priority", "meeting"]);
    assert_eq!(primary.time, t("2025-04-12T08:00:00Z"));
    for src in [&a, &b] {
        assert_eq!(
            snap.get(src).unwrap().lineage.merged_into.as_deref(),
            Some(pid.as_str())
        );
    }
    assert!(primary.text.contains("refine OKR review mechanism"));
    assert!(primary.text.contains("OKR metrics progress plan"));
}

#[test]
fn merge_with_delete_children_and_arity() {
    let (mut s, [a, b, _]) = okr_store();
    let r = exec(
        &mut s,
        json!({"op": "Merge", "target": {"ids": [a, b]}, "args": {"delete_children": true}}),
    );
    assert_eq!(r.count_delta, -1);
    assert!(s.get(&a).unwrap().unwrap().deleted);
    let r = exec(&mut s, json!({"op": "Merge", "target": {"ids": ["3"]}}));
    assert_eq!(r.codes(), vec!["E_TOO_FEW_SOURCES"]);
}

#[test]
fn split_timeline_into_children() {
    let mut s = MemoryStore::in_memory().unwrap();
    let id =
        exec(&mut s, golden_values(&[golden::INCIDENT_ENCODE])[0].clone()).affected_ids[0].clone();
    let r = exec(
        &mut s,
        json!({"op": "Split", "target": {"ids": [id]}, "args": {"strategy": "sentences"}}),
    );
    assert!(r.is_ok(), "{r:?}");
    let children: Vec<String> = serde_json::from_value(r.payload["children"].clone()).unwrap();
    assert!(children.len() >= 2);
    let snap = s.snapshot().unwrap();
    for c in &children {
        let child = snap.get(c).unwrap();
        assert_eq!(child.lineage.parent_id.as_deref(), Some(id.as_str()));
        assert_eq!(child.tags, snap.get(&id).unwrap().tags);
    }
    assert_eq!(
        snap.get(&id)
            .unwrap()
            .facets
            .get(SPLIT_FACET)
            .map(String::as_str),
        Some("true")
    );
    assert_eq!(r.count_delta, children.len() as i64);

    let one = encode(&mut s, "Just one sentence.", &[]);
    let r = exec(&mut s, json!({"op": "Split", "target": {"ids": [one]}}));
    assert_eq!(r.codes(), vec!["E_NOT_SPLITTABLE"]);
    let r = exec(
        &mut s,
        json!({"op": "Split", "target": {"ids": [one]}, "args": {"strategy": "chunks", "chunk_size": 100}}),
    );
    assert_eq!(r.codes(), vec!["E_NOT_SPLITTABLE"]);
}

#[test]
fn label_modes() {
    let mut s = MemoryStore::in_memory().unwrap();
    let id = encode(&mut s, "m", &["meeting", "OKR"]);
    exec(
        &mut s,
        json!({"op": "Label", "target": {"ids": [id]}, "args": {"tags": ["urgent", "OKR"]}}),
    );
    assert_eq!(
        s.get(&id).unwrap().unwrap().tags,
        vec!["meeting", "OKR", "urgent"]
    );
    exec(
        &mut s,
        json!({"op": "Label", "target": {"ids": [id]}, "args": {"tags": ["meeting"], "mode": "remove"}}),
    );
    assert_eq!(s.get(&id).unwrap().unwrap().tags, vec!["OKR", "urgent"]);
    exec(
        &mut s,
        json!({"op": "Label", "target": {"ids": [id]}, "args": {"tags": ["x"], "mode": "replace"}}),
    );
    assert_eq!(s.get(&id).unwrap().unwrap().tags, vec!["x"]);
}

#[test]
fn append_only_permits_additive_ops() {
    let mut s = MemoryStore::in_memory().unwrap();
    let id = encode(&mut s, "First. Second.", &["a"]);
    let r = exec(
        &mut s,
        json!({"op": "Lock", "target": {"ids": [id]}, "args": {"mode": "append_only"}}),
    );
    assert!(r.is_ok());
    assert!(exec(
        &mut s,
        json!({"op": "Label", "target": {"ids": [id]}, "args": {"tags": ["b"]}})
    )
    .is_ok());
    assert!(exec(&mut s, json!({"op": "Split", "target": {"ids": [id]}})).is_ok());
    let r = exec(
        &mut s,
        json!({"op": "Update", "target": {"ids": [id]}, "args": {"set": {"text": "z"}}}),
    );
    assert_eq!(r.codes(), vec!["E_LOCKED"]);
    let r = exec(
        &mut s,
        json!({"op": "Label", "target": {"ids": [id]}, "args": {"tags": ["a"], "mode": "remove"}}),
    );
    assert_eq!(r.codes(), vec!["E_LOCKED"]);
    let r = exec(
        &mut s,
        json!({"op": "Lock", "target": {"ids": [id]}, "args": {"mode": "read_only"}}),
    );
    assert_eq!(r.codes(), vec!["E_ALREADY_LOCKED"]);
}

#[test]
fn expired_lock_is_inert() {
    let mut s = MemoryStore::in_memory().unwrap();
    let id = encode(&mut s, "n", &[]);
    let r = exec(
        &mut s,
        json!({"op": "Lock", "target": {"ids": [id]}, "args": {"mode": "read_only", "policy": {"expires": "2025-01-01T00:00:00Z"}}}),
    );
    assert!(r.is_ok());
    assert!(s.get(&id).unwrap().unwrap().lock.is_some());
    let r = exec(
        &mut s,
        json!({"op": "Update", "target": {"ids": [id]}, "args": {"set": {"text": "changed"}}}),
    );
    assert!(r.is_ok(), "{r:?}");
}

#[test]
fn promote_and_demote_edges() {
    let mut s = MemoryStore::in_memory().unwrap();
    let id = encode(&mut s, "n", &[]);
    exec(
        &mut s,
        json!({"op": "Demote", "target": {"ids": [id]}, "args": {"weight": 0.1}}),
    );
    let r = exec(
        &mut s,
        json!({"op": "Demote", "target": {"ids": [id]}, "args": {"weight_delta": -0.2}}),
    );
    assert!(r.is_ok());
    let item = s.get(&id).unwrap().unwrap();
    assert_eq!(item.weight, 0.0);
    assert!(!item.deleted);

    let r = exec(
        &mut s,
        json!({"op": "Promote", "target": {"ids": [id]}, "args": {"weight_delta": 0.0, "reminder": {"at": "2025-10-02T09:00:00Z"}}}),
    );
    assert!(r.is_ok(), "{r:?}");
    assert_eq!(s.snapshot().unwrap().triggers_for(&id).count(), 1);

    let r = exec(
        &mut s,
        json!({"op": "Promote", "target": {"ids": [id]}, "args": {"weight": 0.8}}),
    );
    assert!(r.diagnostics.is_empty());
    let r = exec(
        &mut s,
        json!({"op": "Promote", "target": {"ids": [id]}, "args": {"weight": 0.2}}),
    );
    assert!(r.is_ok());
    assert_eq!(r.codes(), vec!["W_PROMOTE_LOWERS_WEIGHT"]);

    let r = exec(
        &mut s,
        json!({"op": "Demote", "target": {"ids": [id]}, "args": {"archive": true, "weight_delta": -0.1}}),
    );
    assert!(r.is_ok(), "{r:?}");
    let r = exec(&mut s, json!({"op": "Retrieve", "target": {"ids": [id]}}));
    assert!(r.affected_ids.is_empty());
    let r = exec(
        &mut s,
        json!({"op": "Retrieve", "target": {"filter": {"facets": {"archived": "true"}}}}),
    );
    assert_eq!(r.affected_ids, vec![id]);
}

#[test]
fn delete_soft_and_hard() {
    let mut s = MemoryStore::in_memory().unwrap();
    let a = encode(&mut s, "a", &["x"]);
    let b = encode(&mut s, "b", &["x"]);
    encode(&mut s, "c", &[]);
    let r = exec(&mut s, json!({"op": "Delete", "target": {"ids": [a, b]}}));
    assert_eq!(r.count_delta, -2);
    assert_eq!(s.items().unwrap().len(), 3);

    let d = exec(
        &mut s,
        json!({"op": "Encode", "args": {"payload": {"text": "old"}, "time": "2020-01-01T00:00:00Z"}}),
    )
    .affected_ids[0]
        .clone();
    let audit_before = s.audit().unwrap().len();
    let r = exec(
        &mut s,
        json!({"op": "Delete", "target": {"filter": {"time_range": {"end": "2021-01-01T00:00:00Z"}, "limit": 10}},
            "args": {"mode": "hard"}, "meta": {"confirmation": true}}),
    );
    assert!(r.is_ok(), "{r:?}");
    assert_eq!(r.affected_ids, vec![d]);
    assert_eq!(r.count_delta, -1);
    assert_eq!(s.items().unwrap().len(), 3);
    assert_eq!(s.audit().unwrap().len(), audit_before + 1);

    let r = exec(
        &mut s,
        json!({"op": "Delete", "target": {"all": true}, "args": {"mode": "hard"}}),
    );
    assert_eq!(
        r.codes(),
        vec!["E_GLOBAL_UNCONFIRMED", "E_HARD_DELETE_UNCONFIRMED"]
    );
}

#[test]
fn dry_run_leaves_digest_untouched() {
    let (mut s, [a, b, c]) = okr_store();
    let ops = vec![
        json!({"op": "Encode", "args": {"payload": {"text": "new"}}}),
        json!({"op": "Update", "target": {"ids": [a]}, "args": {"set": {"type": "task"}}}),
        json!({"op": "Label", "target": {"ids": [a]}, "args": {"tags": ["z"]}}),
        json!({"op": "Promote", "target": {"ids": [a]}, "args": {"weight": 1.0}}),
        json!({"op": "Demote", "target": {"ids": [a]}, "args": {"weight": 0.0}}),
        json!({"op": "Merge", "target": {"ids": [a, b]}}),
        json!({"op": "Delete", "target": {"ids": [c]}, "args": {"mode": "hard"}}),
        json!({"op": "Split", "target": {"ids": [a]}, "args": {"strategy": "chunks", "chunk_size": 5}}),
        json!({"op": "Lock", "target": {"ids": [a]}, "args": {"mode": "read_only"}}),
        json!({"op": "Expire", "target": {"ids": [a]}, "args": {"ttl": "P1D", "on_expire": "archive"}}),
        json!({"op": "Retrieve", "target": {"search": {"intent": {"query": "OKR"}}}}),
        json!({"op": "Summarize", "target": {"ids": [a, b]}}),
        json!({"op": "Delete", "target": {"all": true}}),
    ];
    let before = s.digest().unwrap();
    for mut op in ops {
        op["meta"] = json!({"dry_run": true});
        let r = exec(&mut s, op.clone());
        assert!(r.is_ok(), "{op} -> {r:?}");
        assert!(r.dry_run);
        assert_eq!(s.digest().unwrap(), before, "{op}");
    }
    // the would-be effects are still reported
    let r = exec(
        &mut s,
        json!({"op": "Delete", "target": {"all": true}, "meta": {"dry_run": true}}),
    );
    assert_eq!(r.count_delta, -3);
}

#[test]
fn retrieve_orders_and_ties() {
    let mut s = MemoryStore::in_memory().unwrap();
    let r = exec(
        &mut s,
        json!({"op": "Retrieve", "target": {"search": {"intent": {"query": "anything"}}}}),
    );
    assert!(r.is_ok());
    assert_eq!(r.payload["items"], json!([]));

    let a = encode(&mut s, "same text", &[]);
    let b = encode(&mut s, "same text", &[]);
    assert_ne!(a, b);
    for _ in 0..3 {
        let r = exec(
            &mut s,
            json!({"op": "Retrieve", "target": {"search": {"intent": {"query": "same text"}}}}),
        );
        assert_eq!(r.affected_ids, vec![a.clone(), b.clone()]);
    }
    let r = exec(
        &mut s,
        json!({"op": "Retrieve", "target": {"search": {"intent": {"query": "same"}}}, "args": {"fields": ["text"]}}),
    );
    let item = r.payload["items"][0].as_object().unwrap();
    assert_eq!(item.keys().collect::<Vec<_>>(), vec!["id", "text"]);
}

#[test]
fn incident_search_time_desc_puts_timeline_first() {
    let mut s = MemoryStore::in_memory().unwrap();
    exec(
        &mut s,
        json!({"op": "Encode", "args": {"payload": {"text": "API outage follow-up checklist drafted"}, "time": "2025-09-20T00:00:00Z"}}),
    );
    let tl =
        exec(&mut s, golden_values(&[golden::INCIDENT_ENCODE])[0].clone()).affected_ids[0].clone();
    let r = exec(
        &mut s,
        json!({"op": "Retrieve", "target": {"search": {"intent": {"query": "2025-09-28 API outage follow-up"},
            "overrides": {"k": 8, "order_by": "time_desc"}, "limit": 8}}}),
    );
    assert_eq!(r.affected_ids[0], tl);
    assert_eq!(r.affected_ids.len(), 2);
}

#[test]
fn score_bounds() {
    let svc = StubServices::default();
    let text = "Key task: refine OKR review mechanism";
    let mut s = MemoryStore::in_memory().unwrap();
    let id = encode(&mut s, text, &[]);
    let mut item = s.get(&id).unwrap().unwrap();
    item.embedding = Some(svc.embed(text).unwrap());
    item.weight = 1.0;
    let q = svc.embed(text).unwrap();
    let w = ScoreWeights::default();
    assert!((score_item(text, Some(&q), &item, &w) - 1.0).abs() < 1e-9);
    item.weight = 0.0;
    item.embedding = None;
    assert_eq!(score_item("zzz", Some(&q), &item, &w), 0.0);
    // lexical-only path is rescaled to the full range
    item.weight = 1.0;
    assert!((score_item(text, None, &item, &w) - 1.0).abs() < 1e-9);
    assert!(cosine(&q, &q) > 0.999);
}

#[test]
fn summarize_budget_floor() {
    let mut s = MemoryStore::in_memory().unwrap();
    let id = encode(&mut s, "Alpha beta gamma. Delta epsilon.", &[]);
    let r = exec(
        &mut s,
        json!({"op": "Summarize", "target": {"ids": [id]}, "args": {"focus": "delta", "max_tokens": 1}}),
    );
    assert!(r.is_ok(), "{r:?}");
    assert!(crate::text::token_count(r.payload["text"].as_str().unwrap()) <= 1);
    assert_eq!(r.payload["refs"], json!([id]));
    let r = exec(
        &mut s,
        json!({"op": "Summarize", "target": {"filter": {"has_tags": ["none"]}}}),
    );
    assert_eq!(r.codes(), vec!["E_EMPTY_TARGET"]);
}

#[test]
fn unknown_ids_reported() {
    let mut s = MemoryStore::in_memory().unwrap();
    let r = exec(
        &mut s,
        json!({"op": "Update", "target": {"ids": ["7", "8"]}, "args": {"set": {"type": "x"}}}),
    );
    assert_eq!(r.codes(), vec!["E_UNKNOWN_ID"]);
    assert!(r.diagnostics[0].message.contains("7, 8"));
}

#[test]
fn audit_log_is_sequential_and_exportable() {
    let (mut s, _) = okr_store();
    exec(
        &mut s,
        json!({"op": "Retrieve", "target": {"search": {"intent": {"query": "OKR"}}}}),
    );
    let audit = s.audit().unwrap();
    assert_eq!(audit.len(), 4);
    assert!(audit
        .windows(2)
        .all(|w| w[0].seq < w[1].seq && w[0].after_digest != w[1].after_digest));
    let jsonl = s.export_audit_jsonl().unwrap();
    assert_eq!(jsonl.lines().count(), 4);
    assert!(jsonl
        .lines()
        .next()
        .unwrap()
        .starts_with("{\"actor\":null,\"affected_ids\":[\"1\"]"));
}

#[test]
fn persists_across_reopen() {
    let dir = std::env::temp_dir().join(format!("memop-store-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("m.db");
    let _ = std::fs::remove_file(&path);
    assert!(matches!(
        MemoryStore::open_existing(&path),
        Err(ExecError::NotInitialized(_))
    ));
    let digest = {
        let mut s = MemoryStore::open(&path).unwrap();
        encode(&mut s, "persisted", &["p"]);
        s.digest().unwrap()
    };
    let s = MemoryStore::open_existing(&path).unwrap();
    assert_eq!(s.digest().unwrap(), digest);
    assert_eq!(s.items().unwrap()[0].tags, vec!["p"]);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn encode_without_embedding_is_lexically_retrievable() {
    let mut s = MemoryStore::in_memory().unwrap();
    let r = exec(
        &mut s,
        json!({"op": "Encode", "args": {"payload": {"text": "budget review notes"}, "use_embedding": false}}),
    );
    let id = r.affected_ids[0].clone();
    assert!(s.get(&id).unwrap().unwrap().embedding.is_none());
    let r = exec(
        &mut s,
        json!({"op": "Retrieve", "target": {"search": {"intent": {"query": "budget"}}}}),
    );
    assert_eq!(r.affected_ids, vec![id]);
}
