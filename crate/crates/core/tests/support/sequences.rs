//! Randomized op sequences checked against the store's governance,
//! dry-run and failure-atomicity invariants.

#![allow(dead_code)]

use chrono::{DateTime, Duration, Utc};
use memop_core::adapter::{execute_value, Status};
use memop_core::schema::{parse_utc, LockMode};
use memop_core::store::MemoryStore;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use super::gen;

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct Tally {
    pub ops: usize,
    pub ok: usize,
    pub errors: usize,
    pub dry_runs: usize,
    pub hard_deletes: usize,
    pub updates: usize,
}

fn governance_op<R: Rng>(rng: &mut R, max_id: u32) -> Value {
    let id = rng.gen_range(1..=max_id).to_string();
    match rng.gen_range(0..5) {
        0 => json!({"op": "Lock", "target": {"ids": [id]}, "args": {"mode": "read_only"}}),
        1 => json!({"op": "Delete", "target": {"ids": [id]}, "args": {"mode": "hard"},
                    "meta": {"confirmation": true}}),
        2 => {
            json!({"op": "Update", "target": {"ids": [id]}, "args": {"set": {"text": gen::sentence(rng)}}})
        }
        3 => json!({"op": "Expire", "target": {"ids": [id]},
                    "args": {"ttl": *["PT1H", "PT12H", "P1D"].choose(rng).unwrap(),
                             "on_expire": *["demote", "archive", "delete_soft", "anonymize"].choose(rng).unwrap()}}),
        _ => json!({"op": "Delete", "target": {"all": true}, "args": {"mode": "hard"},
                    "meta": {"confirmation": true}}),
    }
}

/// Runs one generated sequence; returns the first invariant violation.
pub fn check_sequence(seed: u64) -> Result<Tally, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = MemoryStore::in_memory().map_err(|e| e.to_string())?;
    let mut now: DateTime<Utc> = parse_utc("2025-09-28T00:00:00Z").unwrap();
    let mut tally = Tally::default();

    let seeds = rng.gen_range(3..=6);
    for _ in 0..seeds {
        let v = gen::instance_for(&mut rng, "Encode", 1, Some(false));
        execute_value(&mut store, &v, now);
    }
    let steps = rng.gen_range(8..=16);
    for _ in 0..steps {
        now += Duration::minutes(rng.gen_range(0..=36 * 60));
        let max_id = store.items().unwrap().len() as u32 + 2;
        let mut v = if rng.gen_bool(0.4) {
            governance_op(&mut rng, max_id)
        } else {
            let op = *gen::OPS.choose(&mut rng).unwrap();
            gen::instance_for(&mut rng, op, max_id, None)
        };
        if rng.gen_bool(0.2) {
            v["meta"]["dry_run"] = json!(true);
        }
        let dry = v
            .pointer("/meta/dry_run")
            .and_then(Value::as_bool)
            .unwrap_or(false);
        let before = store.digest().unwrap();
        let snap = store.snapshot().unwrap();
        let r = execute_value(&mut store, &v, now);
        let after = store.digest().unwrap();
        tally.ops += 1;
        let ctx = || format!("seed {seed}: {v} -> {}", r.to_canonical_json());

        if dry {
            tally.dry_runs += 1;
            if before != after {
                return Err(format!("dry run changed the digest; {}", ctx()));
            }
        }
        if r.status == Status::Error {
            tally.errors += 1;
            if before != after {
                return Err(format!("failed op changed the digest; {}", ctx()));
            }
            continue;
        }
        tally.ok += 1;
        let op = v["op"].as_str().unwrap();
        let hard = op == "Delete" && v.pointer("/args/mode") == Some(&json!("hard"));
        if hard && !dry {
            tally.hard_deletes += 1;
            for id in &r.affected_ids {
                let item = snap.get(id).unwrap();
                if item
                    .active_lock(&now)
                    .is_some_and(|l| l.mode == LockMode::ReadOnly)
                {
                    return Err(format!("hard delete of read_only item {id}; {}", ctx()));
                }
                if store.get(id).unwrap().is_some() {
                    return Err(format!("hard-deleted item {id} still present; {}", ctx()));
                }
            }
        }
        if op == "Update" && !dry {
            tally.updates += 1;
            for id in &r.affected_ids {
                if snap.get(id).unwrap().is_expired(&now) {
                    return Err(format!("update of expired item {id}; {}", ctx()));
                }
            }
        }
    }
    Ok(tally)
}
