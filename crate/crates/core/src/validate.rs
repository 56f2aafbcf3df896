//! Structural and cross-field legality checks for decoded schema instances.
//!
//! Validation never touches a store: lock and expiry state are enforced at
//! execution time. Every violated rule yields exactly one [`Diagnostic`]; the
//! validator does not stop at the first failure.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::schema::{
    infer_stage, Args, Filter, LockMode, OpKind, SchemaInstance, SearchSpec, Stage, Target,
    RESERVED_FIELDS,
};

/// Tolerance applied to the [0,1] weight bound before clamping.
pub const WEIGHT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rule {
    EncodePayload,
    LabelContent,
    UpdateSet,
    WeightExclusive,
    ExpireHorizon,
    LockMode,
    StorageLimit,
    GlobalWriteConfirmation,
    RetrievalAllConfirmation,
    StageAgreement,
    TargetArity,
    NumericRanges,
    HardDeleteConfirmation,
    ReservedField,
}

impl Rule {
    pub const ALL: [Rule; 14] = [
        Rule::EncodePayload,
        Rule::LabelContent,
        Rule::UpdateSet,
        Rule::WeightExclusive,
        Rule::ExpireHorizon,
        Rule::LockMode,
        Rule::StorageLimit,
        Rule::GlobalWriteConfirmation,
        Rule::RetrievalAllConfirmation,
        Rule::StageAgreement,
        Rule::TargetArity,
        Rule::NumericRanges,
        Rule::HardDeleteConfirmation,
        Rule::ReservedField,
    ];

    /// Position in the rule table, `R1` through `R14`.
    pub fn id(self) -> &'static str {
        match self {
            Rule::EncodePayload => "R1",
            Rule::LabelContent => "R2",
            Rule::UpdateSet => "R3",
            Rule::WeightExclusive => "R4",
            Rule::ExpireHorizon => "R5",
            Rule::LockMode => "R6",
            Rule::StorageLimit => "R7",
            Rule::GlobalWriteConfirmation => "R8",
            Rule::RetrievalAllConfirmation => "R9",
            Rule::StageAgreement => "R10",
            Rule::TargetArity => "R11",
            Rule::NumericRanges => "R12",
            Rule::HardDeleteConfirmation => "R13",
            Rule::ReservedField => "R14",
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Rule::EncodePayload => "E_MISSING_PAYLOAD",
            Rule::LabelContent => "E_LABEL_EMPTY",
            Rule::UpdateSet => "E_EMPTY_SET",
            Rule::WeightExclusive => "E_WEIGHT_EXCLUSIVE",
            Rule::ExpireHorizon => "E_EXPIRE_HORIZON",
            Rule::LockMode => "E_LOCK_MODE",
            Rule::StorageLimit => "E_MISSING_LIMIT",
            Rule::GlobalWriteConfirmation => "E_GLOBAL_UNCONFIRMED",
            Rule::RetrievalAllConfirmation => "E_RETRIEVE_ALL_UNCONFIRMED",
            Rule::StageAgreement => "E_STAGE_MISMATCH",
            Rule::TargetArity => "E_TARGET_ARITY",
            Rule::NumericRanges => "E_RANGE",
            Rule::HardDeleteConfirmation => "E_HARD_DELETE_UNCONFIRMED",
            Rule::ReservedField => "E_RESERVED_FIELD",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Rule::EncodePayload => "encode_payload",
            Rule::LabelContent => "label_content",
            Rule::UpdateSet => "update_set",
            Rule::WeightExclusive => "weight_exclusive",
            Rule::ExpireHorizon => "expire_horizon",
            Rule::LockMode => "lock_mode",
            Rule::StorageLimit => "storage_limit",
            Rule::GlobalWriteConfirmation => "global_write_confirmation",
            Rule::RetrievalAllConfirmation => "retrieval_all_confirmation",
            Rule::StageAgreement => "stage_agreement",
            Rule::TargetArity => "target_arity",
            Rule::NumericRanges => "numeric_ranges",
            Rule::HardDeleteConfirmation => "hard_delete_confirmation",
            Rule::ReservedField => "reserved_field",
        }
    }

    pub fn from_code(code: &str) -> Option<Rule> {
        Rule::ALL.into_iter().find(|r| r.code() == code)
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.id(), self.name())
    }
}

/// A structured finding. Also used for runtime errors and warnings in
/// execution results, where `rule` names the governance check involved.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub code: String,
    pub path: String,
    pub rule: String,
    pub message: String,
}

impl Diagnostic {
    pub fn new(
        code: impl Into<String>,
        path: impl Into<String>,
        rule: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Diagnostic {
            code: code.into(),
            path: path.into(),
            rule: rule.into(),
            message: message.into(),
        }
    }

    fn for_rule(rule: Rule, path: impl Into<String>, message: impl Into<String>) -> Self {
        Diagnostic::new(rule.code(), path, rule.name(), message)
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} at {} ({}): {}",
            self.code, self.path, self.rule, self.message
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub diagnostics: Vec<Diagnostic>,
}

impl ValidationReport {
    pub fn codes(&self) -> Vec<&str> {
        self.diagnostics.iter().map(|d| d.code.as_str()).collect()
    }
}

/// Collects at most one diagnostic per rule, keeping the first path seen.
#[derive(Default)]
struct Findings(BTreeMap<Rule, Diagnostic>);

impl Findings {
    fn flag(&mut self, rule: Rule, path: impl Into<String>, message: impl Into<String>) {
        self.0
            .entry(rule)
            .or_insert_with(|| Diagnostic::for_rule(rule, path, message));
    }
}

pub fn validate(inst: &SchemaInstance) -> ValidationReport {
    let mut f = Findings::default();
    let op = inst.op();
    let stage = infer_stage(op);
    let meta = &inst.meta;

    // R10
    if let Some(given) = inst.stage {
        if given != stage {
            f.flag(
                Rule::StageAgreement,
                "/stage",
                format!("{op} belongs to stage {stage}, not {given}"),
            );
        }
    }

    // R11
    match (op, &inst.target) {
        (OpKind::Encode, Some(_)) => f.flag(
            Rule::TargetArity,
            "/target",
            "Encode must not carry a target",
        ),
        (OpKind::Encode, None) => {}
        (_, None) => f.flag(
            Rule::TargetArity,
            "/target",
            format!("{op} requires exactly one target"),
        ),
        (_, Some(_)) => {}
    }

    if let Some(target) = &inst.target {
        check_target(&mut f, op, stage, target);
        if matches!(target, Target::All) {
            if stage == Stage::Ret {
                // R9
                if !meta.confirmation {
                    f.flag(
                        Rule::RetrievalAllConfirmation,
                        "/meta/confirmation",
                        "retrieval over all items must set meta.confirmation",
                    );
                }
            } else if !(meta.confirmation || meta.dry_run) {
                // R8
                f.flag(
                    Rule::GlobalWriteConfirmation,
                    "/meta",
                    "target all=true requires meta.confirmation or meta.dry_run",
                );
            }
        }
    }

    check_args(&mut f, inst);

    let diagnostics: Vec<Diagnostic> = f.0.into_values().collect();
    ValidationReport {
        ok: diagnostics.is_empty(),
        diagnostics,
    }
}

fn check_target(f: &mut Findings, op: OpKind, stage: Stage, target: &Target) {
    match target {
        Target::Ids(ids) => {
            if ids.iter().any(|id| id.trim().is_empty()) {
                f.flag(
                    Rule::NumericRanges,
                    "/target/ids",
                    "ids must be non-empty strings",
                );
            }
        }
        Target::Filter(filter) => check_filter(f, op, stage, filter),
        Target::Search(search) => check_search(f, stage, search),
        Target::All => {}
    }
}

fn check_filter(f: &mut Findings, _op: OpKind, stage: Stage, filter: &Filter) {
    const P: &str = "/target/filter";
    match filter.limit {
        None if stage == Stage::Sto => f.flag(
            Rule::StorageLimit,
            format!("{P}/limit"),
            "storage operations over a filter must include a numeric limit",
        ),
        Some(0) => f.flag(
            Rule::NumericRanges,
            format!("{P}/limit"),
            "limit must be >= 1",
        ),
        _ => {}
    }
    if !filter.has_predicate() {
        f.flag(
            Rule::NumericRanges,
            P,
            "filter needs at least one predicate besides limit",
        );
    }
    if let Some(tr) = &filter.time_range {
        match (&tr.start, &tr.end) {
            (None, None) => f.flag(
                Rule::NumericRanges,
                format!("{P}/time_range"),
                "time_range needs a start or an end",
            ),
            (Some(s), Some(e)) if s > e => f.flag(
                Rule::NumericRanges,
                format!("{P}/time_range"),
                "time_range start is after end",
            ),
            _ => {}
        }
    }
    if let Some(wr) = &filter.weight_range {
        let lo = wr.min.unwrap_or(0.0).clamp(0.0, 1.0);
        let hi = wr.max.unwrap_or(1.0).clamp(0.0, 1.0);
        if lo > hi {
            f.flag(
                Rule::NumericRanges,
                format!("{P}/weight_range"),
                "weight_range min exceeds max",
            );
        }
    }
}

fn check_search(f: &mut Findings, stage: Stage, search: &SearchSpec) {
    const P: &str = "/target/search";
    if search.intent.query.trim().is_empty() {
        f.flag(
            Rule::NumericRanges,
            format!("{P}/intent/query"),
            "search query must be non-empty",
        );
    }
    let overrides = search.overrides.clone().unwrap_or_default();
    if stage == Stage::Sto && search.limit.is_none() && overrides.limit.is_none() {
        f.flag(
            Rule::StorageLimit,
            format!("{P}/limit"),
            "storage operations over a search must include a numeric limit",
        );
    }
    for (path, v) in [
        (format!("{P}/limit"), search.limit),
        (format!("{P}/overrides/limit"), overrides.limit),
        (format!("{P}/overrides/k"), overrides.k),
    ] {
        if v == Some(0) {
            f.flag(Rule::NumericRanges, path, "limits must be >= 1");
        }
    }
}

fn weight_in_unit(w: f64) -> bool {
    (-WEIGHT_TOLERANCE..=1.0 + WEIGHT_TOLERANCE).contains(&w)
}

fn check_weight_pair(f: &mut Findings, weight: Option<f64>, delta: Option<f64>) {
    match (weight, delta) {
        (Some(_), Some(_)) => f.flag(
            Rule::WeightExclusive,
            "/args",
            "weight and weight_delta are mutually exclusive",
        ),
        (None, None) => f.flag(
            Rule::WeightExclusive,
            "/args",
            "exactly one of weight or weight_delta is required",
        ),
        _ => {}
    }
    if let Some(w) = weight {
        if !weight_in_unit(w) {
            f.flag(
                Rule::NumericRanges,
                "/args/weight",
                "weight must lie in [0,1]",
            );
        }
    }
}

fn check_args(f: &mut Findings, inst: &SchemaInstance) {
    let meta = &inst.meta;
    match &inst.args {
        Args::Encode(a) => {
            let has_text = a
                .payload
                .as_ref()
                .is_some_and(|p| !p.text.trim().is_empty());
            if !has_text {
                f.flag(
                    Rule::EncodePayload,
                    "/args/payload/text",
                    "Encode requires a non-empty payload.text",
                );
            }
        }
        Args::Update(a) => {
            if a.set.is_empty() {
                f.flag(
                    Rule::UpdateSet,
                    "/args/set",
                    "Update requires a non-empty set",
                );
            }
            if let Some(key) = a.set.keys().find(|k| RESERVED_FIELDS.contains(&k.as_str())) {
                f.flag(
                    Rule::ReservedField,
                    format!("/args/set/{key}"),
                    format!("`{key}` is a reserved field and cannot be updated"),
                );
            }
            if let Some(w) = a.set.get("weight").and_then(|v| v.as_f64()) {
                if !weight_in_unit(w) {
                    f.flag(
                        Rule::NumericRanges,
                        "/args/set/weight",
                        "weight must lie in [0,1]",
                    );
                }
            }
        }
        Args::Label(a) => {
            let tags = a.tags.as_ref().is_some_and(|t| !t.is_empty());
            let facets = a.facets.as_ref().is_some_and(|m| !m.is_empty());
            if !tags && !facets {
                f.flag(Rule::LabelContent, "/args", "Label requires tags or facets");
            }
        }
        Args::Promote(a) => {
            check_weight_pair(f, a.weight, a.weight_delta);
            if let Some(r) = &a.reminder {
                match (&r.cadence, &r.at) {
                    (Some(_), Some(_)) | (None, None) => f.flag(
                        Rule::NumericRanges,
                        "/args/reminder",
                        "reminder needs exactly one of cadence or at",
                    ),
                    (Some(c), None) if c.is_zero() => f.flag(
                        Rule::NumericRanges,
                        "/args/reminder/cadence",
                        "reminder cadence must be positive",
                    ),
                    _ => {}
                }
            }
        }
        Args::Demote(a) => check_weight_pair(f, a.weight, a.weight_delta),
        Args::Merge(_) | Args::Retrieve(_) => {}
        Args::Delete(a) => {
            if a.mode == Some(crate::schema::DeleteMode::Hard)
                && !(meta.confirmation || meta.dry_run)
            {
                f.flag(
                    Rule::HardDeleteConfirmation,
                    "/meta",
                    "hard delete requires meta.confirmation or meta.dry_run",
                );
            }
        }
        Args::Split(a) => {
            if a.chunk_size == Some(0) {
                f.flag(
                    Rule::NumericRanges,
                    "/args/chunk_size",
                    "chunk_size must be >= 1",
                );
            }
        }
        Args::Lock(a) => match a.mode.as_deref() {
            None => f.flag(Rule::LockMode, "/args/mode", "Lock requires a mode"),
            Some(m) if LockMode::parse(m).is_none() => f.flag(
                Rule::LockMode,
                "/args/mode",
                format!("lock mode `{m}` is not read_only or append_only"),
            ),
            _ => {}
        },
        Args::Expire(a) => {
            match (&a.ttl, &a.until) {
                (Some(_), Some(_)) => f.flag(
                    Rule::ExpireHorizon,
                    "/args",
                    "ttl and until are mutually exclusive",
                ),
                (None, None) => f.flag(
                    Rule::ExpireHorizon,
                    "/args",
                    "Expire needs a finite horizon: ttl or until",
                ),
                (Some(ttl), None) if ttl.is_zero() => {
                    f.flag(Rule::ExpireHorizon, "/args/ttl", "ttl must be positive")
                }
                _ => {}
            }
            if a.on_expire.is_none() {
                f.flag(
                    Rule::ExpireHorizon,
                    "/args/on_expire",
                    "Expire requires an explicit on_expire action",
                );
            }
        }
        Args::Summarize(a) => {
            if a.max_tokens == Some(0) {
                f.flag(
                    Rule::NumericRanges,
                    "/args/max_tokens",
                    "max_tokens must be >= 1",
                );
            }
        }
    }
}
