//! Random schema-instance generators shared by the property tests and the
//! acceptance suite. Every generated instance is valid by construction.

#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::{json, Map, Value};

pub const OPS: [&str; 12] = [
    "Encode",
    "Update",
    "Label",
    "Promote",
    "Demote",
    "Merge",
    "Delete",
    "Split",
    "Lock",
    "Expire",
    "Retrieve",
    "Summarize",
];

const WORDS: [&str; 16] = [
    "okr", "review", "incident", "timeline", "meeting", "metrics", "budget", "plan", "root",
    "cause", "gateway", "customer", "impact", "owner", "beach", "photo",
];

const TIMESTAMPS: [&str; 6] = [
    "2025-01-01T00:00:00Z",
    "2025-04-12T16:00:00+08:00",
    "2025-09-28T22:30:00+08:00",
    "2025-10-05T23:59:59+08:00",
    "2025-06-30T12:15:30.250-05:00",
    "2026-02-28T08:00:00Z",
];

const DURATIONS: [&str; 5] = ["P7D", "PT1H", "P1W", "P1Y2M3DT4H5M6S", "PT90S"];

fn pick<'a, R: Rng>(rng: &mut R, xs: &[&'a str]) -> &'a str {
    xs.choose(rng).unwrap()
}

pub fn sentence<R: Rng>(rng: &mut R) -> String {
    let n = rng.gen_range(1..=6);
    let words: Vec<&str> = (0..n).map(|_| pick(rng, &WORDS)).collect();
    let mut s = words.join(" ");
    if rng.gen_bool(0.5) {
        s.push('.');
    }
    s
}

pub fn text<R: Rng>(rng: &mut R) -> String {
    let n = rng.gen_range(1..=3);
    (0..n).map(|_| sentence(rng)).collect::<Vec<_>>().join(" ")
}

fn tag<R: Rng>(rng: &mut R) -> String {
    match rng.gen_range(0..3) {
        0 => pick(rng, &WORDS).to_string(),
        1 => format!("{}:{}", pick(rng, &WORDS), pick(rng, &WORDS)),
        _ => pick(rng, &WORDS).to_uppercase(),
    }
}

fn tags<R: Rng>(rng: &mut R, min: usize) -> Vec<String> {
    let n = rng.gen_range(min..=3);
    (0..n).map(|_| tag(rng)).collect()
}

fn facets<R: Rng>(rng: &mut R) -> Map<String, Value> {
    let n = rng.gen_range(1..=2);
    (0..n)
        .map(|_| {
            (
                pick(rng, &WORDS).to_string(),
                Value::String(pick(rng, &WORDS).to_string()),
            )
        })
        .collect()
}

fn unit<R: Rng>(rng: &mut R) -> f64 {
    match rng.gen_range(0..4) {
        0 => 0.0,
        1 => 1.0,
        2 => (rng.gen_range(0..=20) as f64) / 20.0,
        _ => rng.gen_range(0.0..=1.0),
    }
}

fn delta<R: Rng>(rng: &mut R) -> f64 {
    rng.gen_range(-1.0..=1.0)
}

fn ts<R: Rng>(rng: &mut R) -> &'static str {
    pick(rng, &TIMESTAMPS)
}

fn ordered_ts<R: Rng>(rng: &mut R) -> (&'static str, &'static str) {
    let mut idx: Vec<usize> = (0..TIMESTAMPS.len()).collect();
    idx.shuffle(rng);
    let (a, b) = (TIMESTAMPS[idx[0]], TIMESTAMPS[idx[1]]);
    let ka = chrono::DateTime::parse_from_rfc3339(a).unwrap();
    let kb = chrono::DateTime::parse_from_rfc3339(b).unwrap();
    if ka <= kb {
        (a, b)
    } else {
        (b, a)
    }
}

fn ids<R: Rng>(rng: &mut R, max_id: u32) -> Vec<String> {
    let n = rng.gen_range(1..=3);
    (0..n)
        .map(|_| rng.gen_range(1..=max_id.max(1)).to_string())
        .collect()
}

fn filter<R: Rng>(rng: &mut R, storage: bool) -> Value {
    let mut f = Map::new();
    loop {
        if rng.gen_bool(0.5) {
            f.insert("has_tags".into(), json!(tags(rng, 1)));
        }
        if rng.gen_bool(0.3) {
            f.insert(
                "type".into(),
                json!(pick(rng, &["note", "task", "summary"])),
            );
        }
        if rng.gen_bool(0.3) {
            let (a, b) = ordered_ts(rng);
            let tr = match rng.gen_range(0..3) {
                0 => json!({"start": a}),
                1 => json!({"end": b}),
                _ => json!({"start": a, "end": b}),
            };
            f.insert("time_range".into(), tr);
        }
        if rng.gen_bool(0.3) {
            let (lo, hi) = {
                let (x, y) = (unit(rng), unit(rng));
                if x <= y {
                    (x, y)
                } else {
                    (y, x)
                }
            };
            f.insert("weight_range".into(), json!({"min": lo, "max": hi}));
        }
        if rng.gen_bool(0.1) {
            f.insert("facets".into(), Value::Object(facets(rng)));
        }
        if !f.is_empty() {
            break;
        }
    }
    if storage || rng.gen_bool(0.5) {
        f.insert("limit".into(), json!(rng.gen_range(1..=50)));
    }
    Value::Object(f)
}

fn search<R: Rng>(rng: &mut R, storage: bool) -> Value {
    let mut intent = json!({"query": sentence(rng)});
    if rng.gen_bool(0.3) {
        intent["context"] = json!(sentence(rng));
    }
    let mut s = json!({"intent": intent});
    let has_overrides = rng.gen_bool(0.5);
    if has_overrides {
        let mut o = Map::new();
        if rng.gen_bool(0.5) {
            o.insert("k".into(), json!(rng.gen_range(1..=10)));
        }
        if rng.gen_bool(0.5) {
            o.insert(
                "order_by".into(),
                json!(pick(rng, &["relevance", "time_desc", "time_asc"])),
            );
        }
        if rng.gen_bool(0.5) || (storage && o.is_empty()) {
            o.insert("limit".into(), json!(rng.gen_range(1..=10)));
        }
        s["overrides"] = Value::Object(o);
    }
    let overrides_limit = s.pointer("/overrides/limit").is_some();
    if rng.gen_bool(0.5) || (storage && !overrides_limit) {
        s["limit"] = json!(rng.gen_range(1..=10));
    }
    s
}

fn stage_of(op: &str) -> &'static str {
    match op {
        "Encode" => "ENC",
        "Retrieve" | "Summarize" => "RET",
        _ => "STO",
    }
}

/// Target for `op`; `all` only when `allow_all`.
fn target<R: Rng>(rng: &mut R, op: &str, max_id: u32, allow_all: bool) -> (Value, bool) {
    let storage = stage_of(op) == "STO";
    let choice = rng.gen_range(0..if allow_all { 10 } else { 9 });
    match choice {
        0..=3 => (json!({"ids": ids(rng, max_id)}), false),
        4..=5 => (json!({"filter": filter(rng, storage)}), false),
        6..=8 => (json!({"search": search(rng, storage)}), false),
        _ => (json!({"all": true}), true),
    }
}

fn weight_args<R: Rng>(rng: &mut R, a: &mut Map<String, Value>) {
    if rng.gen_bool(0.5) {
        a.insert("weight".into(), json!(unit(rng)));
    } else {
        a.insert("weight_delta".into(), json!(delta(rng)));
    }
}

fn args<R: Rng>(rng: &mut R, op: &str, needs_confirmation: &mut bool) -> Value {
    let mut a = Map::new();
    match op {
        "Encode" => {
            a.insert("payload".into(), json!({"text": text(rng)}));
            if rng.gen_bool(0.7) {
                a.insert("tags".into(), json!(tags(rng, 0)));
            }
            if rng.gen_bool(0.5) {
                a.insert(
                    "type".into(),
                    json!(pick(rng, &["note", "task", "war_room_timeline"])),
                );
            }
            if rng.gen_bool(0.5) {
                a.insert("time".into(), json!(ts(rng)));
            }
            if rng.gen_bool(0.3) {
                a.insert("source".into(), json!(pick(rng, &WORDS)));
            }
            if rng.gen_bool(0.2) {
                a.insert("location".into(), json!(pick(rng, &WORDS)));
            }
            if rng.gen_bool(0.3) {
                a.insert("facets".into(), Value::Object(facets(rng)));
            }
            if rng.gen_bool(0.2) {
                a.insert("use_embedding".into(), json!(rng.gen_bool(0.5)));
            }
        }
        "Update" => {
            let mut set = Map::new();
            while set.is_empty() {
                for field in [
                    "text", "type", "tags", "facets", "weight", "time", "source", "actor",
                    "location",
                ] {
                    if rng.gen_bool(0.2) {
                        let v = match field {
                            "text" => json!(text(rng)),
                            "tags" => json!(tags(rng, 0)),
                            "facets" => Value::Object(facets(rng)),
                            "weight" => json!(unit(rng)),
                            "time" => json!(ts(rng)),
                            _ => json!(pick(rng, &WORDS)),
                        };
                        set.insert(field.into(), v);
                    }
                }
            }
            a.insert("set".into(), Value::Object(set));
        }
        "Label" => {
            let which = rng.gen_range(0..3);
            if which != 1 {
                a.insert("tags".into(), json!(tags(rng, 1)));
            }
            if which != 0 {
                a.insert("facets".into(), Value::Object(facets(rng)));
            }
            if rng.gen_bool(0.5) {
                a.insert(
                    "mode".into(),
                    json!(pick(rng, &["add", "replace", "remove"])),
                );
            }
        }
        "Promote" => {
            weight_args(rng, &mut a);
            if rng.gen_bool(0.3) {
                let r = if rng.gen_bool(0.5) {
                    json!({"cadence": pick(rng, &DURATIONS)})
                } else {
                    json!({"at": ts(rng)})
                };
                a.insert("reminder".into(), r);
            }
        }
        "Demote" => {
            weight_args(rng, &mut a);
            if rng.gen_bool(0.3) {
                a.insert("archive".into(), json!(rng.gen_bool(0.5)));
            }
        }
        "Merge" => {
            if rng.gen_bool(0.3) {
                a.insert("strategy".into(), json!("concat"));
            }
            if rng.gen_bool(0.5) {
                a.insert("delete_children".into(), json!(rng.gen_bool(0.5)));
            }
        }
        "Delete" => {
            if rng.gen_bool(0.6) {
                let mode = pick(rng, &["soft", "hard"]);
                if mode == "hard" {
                    *needs_confirmation = true;
                }
                a.insert("mode".into(), json!(mode));
            }
        }
        "Split" => {
            if rng.gen_bool(0.5) {
                a.insert("strategy".into(), json!("sentences"));
            } else if rng.gen_bool(0.5) {
                a.insert("strategy".into(), json!("chunks"));
                a.insert("chunk_size".into(), json!(rng.gen_range(1..=60)));
            }
        }
        "Lock" => {
            a.insert(
                "mode".into(),
                json!(pick(rng, &["read_only", "append_only"])),
            );
            if rng.gen_bool(0.5) {
                a.insert("reason".into(), json!(sentence(rng)));
            }
            if rng.gen_bool(0.5) {
                let mut p = Map::new();
                let mut ops: Vec<&str> = OPS.to_vec();
                ops.shuffle(rng);
                if rng.gen_bool(0.5) {
                    p.insert("allow".into(), json!(ops[..2]));
                }
                if rng.gen_bool(0.5) {
                    p.insert("deny".into(), json!(ops[2..4]));
                }
                if rng.gen_bool(0.3) {
                    p.insert("reviewers".into(), json!([pick(rng, &WORDS)]));
                }
                if rng.gen_bool(0.5) {
                    p.insert("expires".into(), json!(ts(rng)));
                }
                a.insert("policy".into(), Value::Object(p));
            }
        }
        "Expire" => {
            if rng.gen_bool(0.5) {
                a.insert("ttl".into(), json!(pick(rng, &DURATIONS)));
            } else {
                a.insert("until".into(), json!(ts(rng)));
            }
            a.insert(
                "on_expire".into(),
                json!(pick(
                    rng,
                    &["delete_soft", "demote", "archive", "anonymize"]
                )),
            );
        }
        "Retrieve" => {
            if rng.gen_bool(0.3) {
                let mut fields = vec!["id", "text", "tags", "weight", "score", "time", "lineage"];
                fields.shuffle(rng);
                a.insert("fields".into(), json!(fields[..rng.gen_range(1..=3)]));
            }
        }
        "Summarize" => {
            if rng.gen_bool(0.6) {
                a.insert("focus".into(), json!(sentence(rng)));
            }
            if rng.gen_bool(0.5) {
                a.insert("max_tokens".into(), json!(rng.gen_range(1..=64)));
            }
        }
        other => unreachable!("{other}"),
    }
    Value::Object(a)
}

fn meta<R: Rng>(rng: &mut R, confirmation: bool, dry_run: Option<bool>) -> Option<Value> {
    let mut m = Map::new();
    if rng.gen_bool(0.3) {
        m.insert("actor".into(), json!(pick(rng, &WORDS)));
    }
    if rng.gen_bool(0.3) {
        m.insert("timestamp".into(), json!(ts(rng)));
    }
    if rng.gen_bool(0.2) {
        m.insert("lang".into(), json!(pick(rng, &["en", "zh"])));
    }
    if confirmation || rng.gen_bool(0.1) {
        m.insert("confirmation".into(), json!(true));
    }
    match dry_run {
        Some(d) => {
            m.insert("dry_run".into(), json!(d));
        }
        None => {
            if rng.gen_bool(0.1) {
                m.insert("dry_run".into(), json!(true));
            }
        }
    }
    (!m.is_empty()).then_some(Value::Object(m))
}

/// One valid instance of `op`. Ids range over `1..=max_id`.
pub fn instance_for<R: Rng>(rng: &mut R, op: &str, max_id: u32, dry_run: Option<bool>) -> Value {
    let mut inst = Map::new();
    if rng.gen_bool(0.5) {
        inst.insert("stage".into(), json!(stage_of(op)));
    }
    inst.insert("op".into(), json!(op));
    let mut confirm = false;
    if op != "Encode" {
        let (t, all) = target(rng, op, max_id, true);
        confirm |= all;
        inst.insert("target".into(), t);
    }
    let a = args(rng, op, &mut confirm);
    if a.as_object().is_some_and(|m| !m.is_empty()) || rng.gen_bool(0.5) {
        inst.insert("args".into(), a);
    }
    if let Some(m) = meta(rng, confirm, dry_run) {
        inst.insert("meta".into(), m);
    }
    Value::Object(inst)
}

pub fn instance<R: Rng>(rng: &mut R) -> Value {
    let op = pick(rng, &OPS);
    instance_for(rng, op, 999, None)
}

/// Re-renders a JSON value with shuffled object keys and random spacing.
pub fn scramble<R: Rng>(rng: &mut R, v: &Value) -> String {
    let mut out = String::new();
    write_scrambled(rng, v, &mut out);
    out
}

fn ws<R: Rng>(rng: &mut R, out: &mut String) {
    for _ in 0..rng.gen_range(0..3) {
        out.push(*[' ', '\n', '\t'].choose(rng).unwrap());
    }
}

fn write_scrambled<R: Rng>(rng: &mut R, v: &Value, out: &mut String) {
    match v {
        Value::Object(m) => {
            let mut keys: Vec<&String> = m.keys().collect();
            keys.shuffle(rng);
            out.push('{');
            for (i, k) in keys.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                ws(rng, out);
                out.push_str(&serde_json::to_string(k).unwrap());
                ws(rng, out);
                out.push(':');
                ws(rng, out);
                write_scrambled(rng, &m[*k], out);
            }
            ws(rng, out);
            out.push('}');
        }
        Value::Array(xs) => {
            out.push('[');
            for (i, x) in xs.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                    ws(rng, out);
                }
                write_scrambled(rng, x, out);
            }
            out.push(']');
        }
        other => out.push_str(&serde_json::to_string(other).unwrap()),
    }
}
