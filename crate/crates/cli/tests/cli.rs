use std::io::Cursor;
use std::path::Path;
use std::process::Command;

use memop_cli::{
    cmd_exec, cmd_init, cmd_repl, cmd_validate, split_entries, CliConfig, CliError, Exit, Format,
};
use memop_core::golden;
use memop_core::schema::parse_utc;
use memop_core::store::MemoryStore;
use serde_json::Value;

fn config(db: &Path) -> CliConfig {
    CliConfig {
        db_path: Some(db.to_path_buf()),
        clock: Some(parse_utc("2025-04-14T10:00:00+08:00").unwrap()),
        ..CliConfig::default()
    }
}

fn fresh(dir: &tempfile::TempDir) -> CliConfig {
    let cfg = config(&dir.path().join("mem.db"));
    cmd_init(&cfg, &mut Vec::new()).unwrap();
    cfg
}

fn jsonl(parts: &[&str]) -> String {
    parts
        .iter()
        .map(|s| serde_json::from_str::<Value>(s).unwrap().to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

fn lines(out: &[u8]) -> Vec<Value> {
    String::from_utf8_lossy(out)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn validate_accepts_worked_instance() {
    let mut out = Vec::new();
    let exit = cmd_validate(&CliConfig::default(), golden::INCIDENT_LOCK, &mut out).unwrap();
    assert_eq!(exit, Exit::Success);
    assert_eq!(lines(&out)[0]["ok"], true);
}

#[test]
fn validate_rejects_both_weight_fields() {
    let bad = r#"{"op":"Promote","target":{"ids":["1"]},"args":{"weight":0.9,"weight_delta":0.1}}"#;
    let mut out = Vec::new();
    let exit = cmd_validate(&CliConfig::default(), bad, &mut out).unwrap();
    assert_eq!(exit, Exit::Failure);
    let report = &lines(&out)[0];
    assert_eq!(report["diagnostics"][0]["code"], "E_WEIGHT_EXCLUSIVE");
}

#[test]
fn validate_jsonl_with_a_malformed_line() {
    let text = format!(
        "{}\n{{oops\n{}\n",
        jsonl(&[golden::OKR_PROMOTE]),
        jsonl(&[golden::OKR_ENCODE_MEETING])
    );
    let mut out = Vec::new();
    let exit = cmd_validate(&CliConfig::default(), &text, &mut out).unwrap();
    assert_eq!(exit, Exit::Failure);
    let reports = lines(&out);
    assert_eq!(reports.len(), 3);
    assert_eq!(reports[1]["diagnostics"][0]["code"], "MalformedJson");
    assert_eq!(
        (reports[0]["ok"].clone(), reports[2]["ok"].clone()),
        (Value::Bool(true), Value::Bool(true))
    );
}

#[test]
fn split_entries_handles_documents_and_streams() {
    assert_eq!(split_entries(golden::OKR_PROMOTE).len(), 1);
    assert_eq!(split_entries(&jsonl(&golden::ALL)).len(), 6);
    assert_eq!(split_entries("  \n").len(), 0);
}

#[test]
fn exec_runs_the_okr_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fresh(&dir);
    let mut out = Vec::new();
    let exit = cmd_exec(&cfg, &jsonl(&golden::OKR_WORKFLOW), &mut out).unwrap();
    assert_eq!(exit, Exit::Success);
    let results = lines(&out);
    assert_eq!(results.len(), 3);
    assert!(results.iter().all(|r| r["status"] == "ok"));
    let store = MemoryStore::open_existing(cfg.db_path.as_ref().unwrap()).unwrap();
    let items = store.items().unwrap();
    assert_eq!(items.len(), 2);
    assert!(items.iter().all(|i| i.weight == 0.9));
}

#[test]
fn dry_run_flag_leaves_digest_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = fresh(&dir);
    cmd_exec(&cfg, &jsonl(&golden::OKR_WORKFLOW[..2]), &mut Vec::new()).unwrap();
    let db = cfg.db_path.clone().unwrap();
    let before = MemoryStore::open_existing(&db).unwrap().digest().unwrap();
    cfg.dry_run = true;
    let mut out = Vec::new();
    let exit = cmd_exec(
        &cfg,
        &jsonl(&[golden::OKR_PROMOTE, golden::OKR_ENCODE_KEY_TASK]),
        &mut out,
    )
    .unwrap();
    assert_eq!(exit, Exit::Success);
    assert!(lines(&out).iter().all(|r| r["dry_run"] == true));
    assert_eq!(
        MemoryStore::open_existing(&db).unwrap().digest().unwrap(),
        before
    );
}

#[test]
fn exec_against_missing_db_requires_init() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&dir.path().join("absent.db"));
    let err = cmd_exec(&cfg, golden::OKR_ENCODE_MEETING, &mut Vec::new()).unwrap_err();
    assert!(matches!(err, CliError::InitRequired(_)));
    assert_eq!(err.code(), "E_INIT_REQUIRED");
    assert!(!dir.path().join("absent.db").exists());
}

#[test]
fn exec_is_fail_stop() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fresh(&dir);
    let bad = r#"{"op":"Update","target":{"ids":["42"]},"args":{"set":{"text":"x"}}}"#;
    let text = jsonl(&[golden::OKR_ENCODE_MEETING, bad, golden::OKR_ENCODE_KEY_TASK]);
    let mut out = Vec::new();
    assert_eq!(cmd_exec(&cfg, &text, &mut out).unwrap(), Exit::Failure);
    let st: Vec<Value> = lines(&out).iter().map(|r| r["status"].clone()).collect();
    assert_eq!(st, vec!["ok", "error", "skipped"]);
}

#[test]
fn repl_session() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = fresh(&dir);
    cfg.clock = Some(parse_utc("2025-09-29T00:10:00+08:00").unwrap());
    // Multi-line entry, then the lock and summary, then meta commands.
    let script = format!(
        "{}\n{}\n{}\n.digest\n.digest\n{{broken\n.inspect 1\n.inspect 99\n.nope\n.quit\n{}\n",
        golden::INCIDENT_ENCODE,
        jsonl(&[golden::INCIDENT_LOCK]),
        jsonl(&[golden::INCIDENT_SUMMARIZE]),
        golden::OKR_ENCODE_MEETING,
    );
    let mut out = Vec::new();
    let exit = cmd_repl(&cfg, &mut Cursor::new(script), &mut out, false).unwrap();
    assert_eq!(exit, Exit::Success);
    let text = String::from_utf8(out).unwrap();
    assert!(text.contains("\"summary_id\": \"2\""), "{text}");
    let digests: Vec<&str> = text
        .lines()
        .filter(|l| l.len() == 64 && !l.contains(' '))
        .collect();
    assert_eq!(digests.len(), 2);
    assert_eq!(digests[0], digests[1]);
    assert!(text.contains("MalformedJson"));
    assert!(text.contains("\"read_only\""));
    assert!(text.contains("no item with id \"99\""));
    assert!(text.contains("unknown command .nope"));
    // Nothing after .quit ran.
    let store = MemoryStore::open_existing(cfg.db_path.as_ref().unwrap()).unwrap();
    assert_eq!(store.items().unwrap().len(), 2);
}

#[test]
fn table_format_is_human_readable() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = fresh(&dir);
    cfg.format = Format::Table;
    let mut out = Vec::new();
    cmd_exec(&cfg, golden::OKR_ENCODE_MEETING, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.starts_with("#0 Encode"), "{text}");
}

fn memop(args: &[&str], stdin: Option<&str>) -> (i32, String, String) {
    use std::io::Write;
    use std::process::Stdio;
    let mut child = Command::new(env!("CARGO_BIN_EXE_memop"))
        .args(args)
        .env_clear()
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    // The child may exit before reading stdin, closing the pipe early.
    let written = child
        .stdin
        .take()
        .unwrap()
        .write_all(stdin.unwrap_or("").as_bytes());
    if let Err(e) = written {
        assert_eq!(e.kind(), std::io::ErrorKind::BrokenPipe, "{e}");
    }
    let o = child.wait_with_output().unwrap();
    (
        o.status.code().unwrap(),
        String::from_utf8_lossy(&o.stdout).into_owned(),
        String::from_utf8_lossy(&o.stderr).into_owned(),
    )
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("m.db");
    let db = db.to_str().unwrap();
    let clock = "--clock=2025-04-14T10:00:00+08:00";

    let (code, _, err) = memop(
        &["exec", "--db", db, clock],
        Some(golden::OKR_ENCODE_MEETING),
    );
    assert_eq!(code, 2);
    assert!(err.contains("E_INIT_REQUIRED"));

    assert_eq!(memop(&["init", "--db", db], None).0, 0);
    let (code, out, _) = memop(
        &["exec", "--db", db, clock],
        Some(&jsonl(&golden::OKR_WORKFLOW)),
    );
    assert_eq!(code, 0);
    assert_eq!(out.lines().count(), 3);

    let bad = r#"{"op":"Promote","target":{"ids":["1"]},"args":{"weight":0.9,"weight_delta":0.1}}"#;
    assert_eq!(memop(&["validate"], Some(bad)).0, 1);
    assert_eq!(memop(&["validate", "/nonexistent/x.json"], None).0, 2);

    let cases = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../fixtures/bench/cases.jsonl"
    );
    let (code, out, _) = memop(&["bench", cases, "--format", "table"], None);
    assert_eq!(code, 0);
    assert!(out.contains("SMA 1.0000 (15/15)"), "{out}");
}
