use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::corpus::SeedItem;
use crate::knowledge::{Difficulty, ModuleId};

/// Closed set of reasons an item can be rejected for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReasonCode {
    MalformedJson,
    MissingKey,
    WrongType,
    BadEnum,
    UnexpectedKey,
    EmptySteps,
    EmptyFinalAnswer,
    EmptyVerification,
    StageMisaligned,
    PrereqNotPermitted,
    VerificationFailed,
    DifficultyAboveCap,
    NearDuplicate,
}

impl ReasonCode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::MalformedJson => "malformed_json",
            Self::MissingKey => "missing_key",
            Self::WrongType => "wrong_type",
            Self::BadEnum => "bad_enum",
            Self::UnexpectedKey => "unexpected_key",
            Self::EmptySteps => "empty_steps",
            Self::EmptyFinalAnswer => "empty_final_answer",
            Self::EmptyVerification => "empty_verification",
            Self::StageMisaligned => "stage_misaligned",
            Self::PrereqNotPermitted => "prereq_not_permitted",
            Self::VerificationFailed => "verification_failed",
            Self::DifficultyAboveCap => "difficulty_above_cap",
            Self::NearDuplicate => "near_duplicate",
        }
    }
}

impl fmt::Display for ReasonCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One rejection reason with the JSON path it concerns.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Reason {
    pub code: ReasonCode,
    pub path: String,
}

impl Reason {
    pub fn new(code: ReasonCode, path: impl Into<String>) -> Self {
        Self { code, path: path.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Solution {
    pub steps: Vec<String>,
    pub final_answer: String,
    pub verification: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CognitiveLoad {
    pub scale: String,
    pub notes: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdapterFlags {
    pub concretization: bool,
    pub decomposition: bool,
    pub cognitive_load: CognitiveLoad,
    pub format_template: String,
    pub simplified_language: bool,
}

impl Default for AdapterFlags {
    fn default() -> Self {
        Self {
            concretization: true,
            decomposition: true,
            cognitive_load: CognitiveLoad { scale: "small".into(), notes: String::new() },
            format_template: "Stepwise-3".into(),
            simplified_language: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemMetadata {
    pub stage_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_style_ref: Option<String>,
}

/// A synthesized training item in the teacher's output format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthesisItem {
    pub module: ModuleId,
    pub prereq: Vec<ModuleId>,
    pub difficulty_tag: Difficulty,
    pub problem: String,
    pub solution: Solution,
    pub adapter_flags: AdapterFlags,
    pub metadata: ItemMetadata,
}

impl SynthesisItem {
    /// Wraps a seed item so it can be fed to a student as training data.
    pub fn from_seed(seed: &SeedItem, stage_id: &str) -> Self {
        Self {
            module: seed.module_id.clone(),
            prereq: Vec::new(),
            difficulty_tag: Difficulty::Introductory,
            problem: seed.prompt.clone(),
            solution: Solution {
                steps: vec![seed.reference.clone()],
                final_answer: seed.reference.clone(),
                verification: "reference answer from the seed set".into(),
            },
            adapter_flags: AdapterFlags::default(),
            metadata: ItemMetadata { stage_id: stage_id.to_string(), seed_style_ref: Some(seed.id.clone()) },
        }
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("item serializes")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ValidateOptions {
    /// Accept the known misspelling of `intermediate`.
    pub lenient_difficulty: bool,
}

#[derive(Clone, Copy)]
enum Kind {
    Str,
    Bool,
    StrList,
    Difficulty,
    Object(&'static [Field]),
}

struct Field {
    key: &'static str,
    kind: Kind,
    optional: bool,
}

const fn req(key: &'static str, kind: Kind) -> Field {
    Field { key, kind, optional: false }
}

const SOLUTION: &[Field] = &[
    req("steps", Kind::StrList),
    req("final_answer", Kind::Str),
    req("verification", Kind::Str),
];
const COGNITIVE_LOAD: &[Field] = &[req("scale", Kind::Str), req("notes", Kind::Str)];
const FLAGS: &[Field] = &[
    req("concretization", Kind::Bool),
    req("decomposition", Kind::Bool),
    req("cognitive_load", Kind::Object(COGNITIVE_LOAD)),
    req("format_template", Kind::Str),
    req("simplified_language", Kind::Bool),
];
const METADATA: &[Field] = &[
    req("stage_id", Kind::Str),
    Field { key: "seed_style_ref", kind: Kind::Str, optional: true },
];
const ITEM: &[Field] = &[
    req("module", Kind::Str),
    req("prereq", Kind::StrList),
    req("difficulty_tag", Kind::Difficulty),
    req("problem", Kind::Str),
    req("solution", Kind::Object(SOLUTION)),
    req("adapter_flags", Kind::Object(FLAGS)),
    req("metadata", Kind::Object(METADATA)),
];

fn check_object(obj: &Map<String, Value>, fields: &[Field], path: &str, opts: ValidateOptions, out: &mut Vec<Reason>) {
    let join = |key: &str| if path.is_empty() { key.to_string() } else { format!("{path}.{key}") };
    for key in obj.keys() {
        if !fields.iter().any(|f| f.key == key) {
            out.push(Reason::new(ReasonCode::UnexpectedKey, join(key)));
        }
    }
    for field in fields {
        let p = join(field.key);
        let value = match obj.get(field.key) {
            None => {
                if !field.optional {
                    out.push(Reason::new(ReasonCode::MissingKey, p));
                }
                continue;
            }
            Some(Value::Null) if field.optional => continue,
            Some(v) => v,
        };
        match field.kind {
            Kind::Str if !value.is_string() => out.push(Reason::new(ReasonCode::WrongType, p)),
            Kind::Bool if !value.is_boolean() => out.push(Reason::new(ReasonCode::WrongType, p)),
            Kind::StrList => match value.as_array() {
                Some(xs) if xs.iter().all(Value::is_string) => {}
                _ => out.push(Reason::new(ReasonCode::WrongType, p)),
            },
            Kind::Difficulty => match value.as_str() {
                None => out.push(Reason::new(ReasonCode::WrongType, p)),
                Some(s) => {
                    let parsed = if opts.lenient_difficulty { Difficulty::parse_lenient(s) } else { Difficulty::parse(s) };
                    if parsed.is_none() {
                        out.push(Reason::new(ReasonCode::BadEnum, p));
                    }
                }
            },
            Kind::Object(inner) => match value.as_object() {
                Some(o) => check_object(o, inner, &p, opts, out),
                None => out.push(Reason::new(ReasonCode::WrongType, p)),
            },
            _ => {}
        }
    }
}

/// Checks one raw record against the item schema. Never panics; every
/// problem found is reported.
pub fn validate_item(raw: &Value, opts: ValidateOptions) -> Result<SynthesisItem, Vec<Reason>> {
    let Some(obj) = raw.as_object() else {
        return Err(vec![Reason::new(ReasonCode::WrongType, "")]);
    };
    let mut reasons = Vec::new();
    check_object(obj, ITEM, "", opts, &mut reasons);
    let solution = obj.get("solution").and_then(Value::as_object);
    let text = |key: &str| solution.and_then(|s| s.get(key)).and_then(Value::as_str);
    if let Some(steps) = solution.and_then(|s| s.get("steps")).and_then(Value::as_array) {
        if steps.iter().all(|s| s.as_str().is_some_and(|t| t.trim().is_empty())) {
            reasons.push(Reason::new(ReasonCode::EmptySteps, "solution.steps"));
        }
    }
    if text("final_answer").is_some_and(|t| t.trim().is_empty()) {
        reasons.push(Reason::new(ReasonCode::EmptyFinalAnswer, "solution.final_answer"));
    }
    if text("verification").is_some_and(|t| t.trim().is_empty()) {
        reasons.push(Reason::new(ReasonCode::EmptyVerification, "solution.verification"));
    }
    if !reasons.is_empty() {
        reasons.sort();
        return Err(reasons);
    }
    let mut normalized = raw.clone();
    if let Some(tag) = normalized.get_mut("difficulty_tag") {
        let d = Difficulty::parse_lenient(tag.as_str().unwrap_or_default()).expect("checked above");
        *tag = Value::String(d.as_str().to_string());
    }
    serde_json::from_value(normalized).map_err(|_| vec![Reason::new(ReasonCode::WrongType, "")])
}

/// Pulls the list of raw item records out of a teacher response. Accepts a
/// bare array, a single object, or either wrapped in prose or code fences.
pub fn extract_items(text: &str) -> Result<Vec<Value>, Reason> {
    let trimmed = text.trim();
    match serde_json::from_str::<Value>(trimmed) {
        Ok(Value::Array(items)) => return Ok(items),
        Ok(obj @ Value::Object(_)) => return Ok(vec![obj]),
        _ => {}
    }
    if let Some(items) = crate::knowledge::first_object_array(trimmed) {
        return Ok(items);
    }
    for (pos, _) in trimmed.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&trimmed[pos..]).into_iter::<Value>();
        if let Some(Ok(obj @ Value::Object(_))) = stream.next() {
            return Ok(vec![obj]);
        }
    }
    Err(Reason::new(ReasonCode::MalformedJson, ""))
}
