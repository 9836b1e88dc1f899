use std::collections::{BTreeMap, BTreeSet, HashSet};

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::schema::{validate_item, Reason, ReasonCode, SynthesisItem, ValidateOptions};
use crate::knowledge::{Difficulty, ModuleId};

pub const DEDUP_THRESHOLD: f64 = 0.85;

/// Decides whether an item's own verification holds up.
pub trait Verifier: Send + Sync {
    fn verify(&self, item: &SynthesisItem) -> bool;
}

/// Structural check: the verification text must be non-empty and either
/// restate the final answer or read like an actual check.
pub struct StructuralVerifier {
    check_words: Regex,
}

impl Default for StructuralVerifier {
    fn default() -> Self {
        Self {
            check_words: Regex::new(r"(?i)assert|==|verif|check|satisf|consistent").expect("valid pattern"),
        }
    }
}

impl Verifier for StructuralVerifier {
    fn verify(&self, item: &SynthesisItem) -> bool {
        let v = item.solution.verification.trim();
        if v.is_empty() {
            return false;
        }
        let answer = item.solution.final_answer.trim();
        (!answer.is_empty() && v.contains(answer)) || self.check_words.is_match(v)
    }
}

impl<F: Fn(&SynthesisItem) -> bool + Send + Sync> Verifier for F {
    fn verify(&self, item: &SynthesisItem) -> bool {
        self(item)
    }
}

/// Lower-cased, whitespace-collapsed problem text.
pub fn dedup_key(item: &SynthesisItem) -> String {
    item.problem.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Token trigrams of a dedup key; texts shorter than three tokens form a single shingle.
pub fn shingles(key: &str) -> HashSet<String> {
    let tokens: Vec<&str> = key.split(' ').filter(|t| !t.is_empty()).collect();
    if tokens.len() < 3 {
        return HashSet::from([tokens.join(" ")]);
    }
    tokens.windows(3).map(|w| w.join(" ")).collect()
}

pub fn jaccard(a: &HashSet<String>, b: &HashSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

pub fn near_duplicates(a: &SynthesisItem, b: &SynthesisItem) -> bool {
    jaccard(&shingles(&dedup_key(a)), &shingles(&dedup_key(b))) > DEDUP_THRESHOLD
}

/// Stage-specific acceptance rules.
pub struct FilterContext<'a> {
    pub stage_modules: &'a BTreeSet<ModuleId>,
    /// Prerequisites an item may list, per module.
    pub permitted_prereqs: &'a BTreeMap<ModuleId, BTreeSet<ModuleId>>,
    pub difficulty_cap: Difficulty,
    pub options: ValidateOptions,
    pub verifier: &'a dyn Verifier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub item_index: usize,
    pub reasons: Vec<Reason>,
    pub item: Value,
}

impl Rejection {
    pub fn codes(&self) -> BTreeSet<ReasonCode> {
        self.reasons.iter().map(|r| r.code).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FilterReport {
    pub accepted: Vec<SynthesisItem>,
    pub rejected: Vec<Rejection>,
}

impl FilterReport {
    pub fn acceptance_rate(&self) -> f64 {
        let total = self.accepted.len() + self.rejected.len();
        if total == 0 {
            0.0
        } else {
            self.accepted.len() as f64 / total as f64
        }
    }
}

fn stage_checks(item: &SynthesisItem, ctx: &FilterContext<'_>) -> Vec<Reason> {
    let mut reasons = Vec::new();
    if !ctx.stage_modules.contains(&item.module) {
        reasons.push(Reason::new(ReasonCode::StageMisaligned, "module"));
    }
    let empty = BTreeSet::new();
    let permitted = ctx.permitted_prereqs.get(&item.module).unwrap_or(&empty);
    if item.prereq.iter().any(|p| !permitted.contains(p)) {
        reasons.push(Reason::new(ReasonCode::PrereqNotPermitted, "prereq"));
    }
    if !ctx.verifier.verify(item) {
        reasons.push(Reason::new(ReasonCode::VerificationFailed, "solution.verification"));
    }
    if item.difficulty_tag > ctx.difficulty_cap {
        reasons.push(Reason::new(ReasonCode::DifficultyAboveCap, "difficulty_tag"));
    }
    reasons
}

/// Runs schema, alignment, verification, difficulty and duplicate checks over
/// a batch. Duplicates are judged in input order against `prior_accepted`
/// and against earlier accepted items of the same batch.
pub fn filter_batch(items: &[Value], ctx: &FilterContext<'_>, prior_accepted: &[SynthesisItem]) -> FilterReport {
    let mut report = FilterReport::default();
    let mut seen: Vec<HashSet<String>> = prior_accepted.iter().map(|i| shingles(&dedup_key(i))).collect();
    for (item_index, raw) in items.iter().enumerate() {
        let reject = |reasons: Vec<Reason>| Rejection { item_index, reasons, item: raw.clone() };
        let item = match validate_item(raw, ctx.options) {
            Ok(item) => item,
            Err(reasons) => {
                report.rejected.push(reject(reasons));
                continue;
            }
        };
        let reasons = stage_checks(&item, ctx);
        if !reasons.is_empty() {
            report.rejected.push(reject(reasons));
            continue;
        }
        let fp = shingles(&dedup_key(&item));
        if seen.iter().any(|s| jaccard(s, &fp) > DEDUP_THRESHOLD) {
            report.rejected.push(reject(vec![Reason::new(ReasonCode::NearDuplicate, "problem")]));
            continue;
        }
        seen.push(fp);
        report.accepted.push(item);
    }
    report
}
