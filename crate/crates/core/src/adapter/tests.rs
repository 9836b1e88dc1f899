use std::collections::{BTreeMap, BTreeSet};

use serde_json::{json, Value};

use super::*;
use crate::knowledge::{DependencyGraph, Difficulty, KnowledgeHierarchy, KnowledgeModule, ModuleId};
use crate::organizer::Stage;

const ALGEBRA: &str = include_str!("../../tests/fixtures/listings/algebra_linear_system.json");

fn algebra() -> Value {
    serde_json::from_str::<Value>(ALGEBRA).unwrap()[0].clone()
}

fn codes(raw: &Value) -> Vec<ReasonCode> {
    match validate_item(raw, ValidateOptions::default()) {
        Ok(_) => vec![],
        Err(rs) => rs.into_iter().map(|r| r.code).collect(),
    }
}

#[test]
fn listing_validates_and_round_trips() {
    let item = validate_item(&algebra(), ValidateOptions::default()).unwrap();
    assert_eq!(item.module.as_str(), "Algebra/Linear-Equations");
    assert_eq!(item.difficulty_tag, Difficulty::Introductory);
    assert_eq!(validate_item(&item.to_value(), ValidateOptions::default()).unwrap(), item);
}

#[test]
fn schema_rejections() {
    let mut v = algebra();
    v["solution"].as_object_mut().unwrap().remove("verification");
    assert_eq!(codes(&v), [ReasonCode::MissingKey]);

    let mut v = algebra();
    v["difficulty_tag"] = json!("expert");
    assert_eq!(codes(&v), [ReasonCode::BadEnum]);

    let mut v = algebra();
    v["difficulty_tag"] = json!("interdiate");
    assert_eq!(codes(&v), [ReasonCode::BadEnum]);
    let lenient = validate_item(&v, ValidateOptions { lenient_difficulty: true }).unwrap();
    assert_eq!(lenient.difficulty_tag, Difficulty::Intermediate);

    let mut v = algebra();
    v["metadata"].as_object_mut().unwrap().remove("seed_style_ref");
    assert!(codes(&v).is_empty());

    let mut v = algebra();
    v["solution"]["steps"] = json!([]);
    assert_eq!(codes(&v), [ReasonCode::EmptySteps]);

    let mut v = algebra();
    v["adapter_flags"]["concretization"] = json!("yes");
    assert_eq!(codes(&v), [ReasonCode::WrongType]);

    assert_eq!(codes(&json!([1])), [ReasonCode::WrongType]);
}

#[test]
fn extraction() {
    assert_eq!(extract_items(ALGEBRA).unwrap().len(), 1);
    let fenced = format!("Here you go:\n```json\n{ALGEBRA}```\n");
    assert_eq!(extract_items(&fenced).unwrap().len(), 1);
    assert_eq!(extract_items("no json here").unwrap_err().code, ReasonCode::MalformedJson);
}

fn hierarchy() -> KnowledgeHierarchy {
    let m = |id: &str, d| KnowledgeModule::new(id, id.split('/').next().unwrap(), id, d).unwrap();
    KnowledgeHierarchy::new(
        "Mathematics",
        vec![
            m("Algebra/Linear-Equations", Difficulty::Introductory),
            m("Algebra/Systems", Difficulty::Intermediate),
            m("Algebra/Variables", Difficulty::Introductory),
        ],
    )
    .unwrap()
}

fn stage(ids: &[&str]) -> Stage<f64> {
    serde_json::from_value(json!({
        "stage_id": "S1-Algebra-1",
        "level": 1,
        "category": "Algebra",
        "modules": ids,
        "difficulties": ids.iter().map(|k| (k.to_string(), 0.5)).collect::<BTreeMap<_, _>>(),
        "avg_difficulty": 0.5
    }))
    .unwrap()
}

#[test]
fn stage_prompt_fills_placeholders() {
    let h = hierarchy();
    let mut g = DependencyGraph::new(h.ids().cloned());
    g.add_edge("Algebra/Variables", "Algebra/Systems", 0.6).unwrap();
    let st = stage(&["Algebra/Linear-Equations", "Algebra/Systems"]);
    let ctx = StageContext {
        stage: &st,
        hierarchy: &h,
        graph: &g,
        tau_dep: 0.3,
        baseline_ratio: 0.42,
        size_cap: "small",
        complexity_cap: "intermediate",
    };
    let p = render_stage_prompt(&ctx, 10, None).unwrap();
    assert_eq!(p.kind, PromptKind::Stage);
    for needle in ["Generate 10 ", "Algebra/Linear-Equations", "Algebra/Systems", "Algebra/Variables", "S1-Algebra-1", "0.420"] {
        assert!(p.user.contains(needle), "missing {needle}");
    }
    assert!(p.user.contains("Prerequisites: Algebra/Linear-Equations: none; Algebra/Systems: Algebra/Variables"));
    assert_eq!(render_stage_prompt(&ctx, 10, None).unwrap(), p);
    assert_eq!(render_stage_prompt(&ctx, 0, None), Err(AdapterError::ZeroCount));
    for d in [
        "Concretization",
        "Decomposition",
        "Cognitive Load",
        "Format Optimization",
        "Linguistic Complexity",
    ] {
        assert!(p.system.contains(d));
    }

    let weak: BTreeSet<ModuleId> = ["Algebra/Systems".into()].into();
    let r = render_remedial_prompt(&ctx, &weak, 5, 1).unwrap();
    assert!(r.user.contains("Generate 5 ") && !r.user.contains("Linear-Equations"));
    assert_eq!(render_remedial_prompt(&ctx, &BTreeSet::new(), 5, 1), Err(AdapterError::EmptyWeakSet));
    let b = render_bridging_prompt(&ctx, 3).unwrap();
    assert!(b.user.contains("one notch") && b.user.contains("Difficulty Cap: advanced"));

    let bad = stage(&["Algebra/Nope"]);
    let ctx = StageContext { stage: &bad, ..ctx };
    assert_eq!(render_stage_prompt(&ctx, 1, None), Err(AdapterError::UnknownModule("Algebra/Nope".into())));
}

fn item(module: &str, prereq: &[&str], problem: &str) -> SynthesisItem {
    let mut v = algebra();
    v["module"] = json!(module);
    v["prereq"] = json!(prereq);
    v["problem"] = json!(problem);
    validate_item(&v, ValidateOptions::default()).unwrap()
}

#[test]
fn filtering() {
    let modules: BTreeSet<ModuleId> = ["Algebra/Linear-Equations".into()].into();
    let permitted = BTreeMap::from([(
        ModuleId::from("Algebra/Linear-Equations"),
        BTreeSet::from([ModuleId::from("Algebra/Variables")]),
    )]);
    let verifier = StructuralVerifier::default();
    let ctx = FilterContext {
        stage_modules: &modules,
        permitted_prereqs: &permitted,
        difficulty_cap: Difficulty::Introductory,
        options: ValidateOptions::default(),
        verifier: &verifier,
    };
    let ok = item("Algebra/Linear-Equations", &["Algebra/Variables"], "one two three four five six");
    let dup = item("Algebra/Linear-Equations", &[], "One  two three four five SIX");
    let other = item("Algebra/Linear-Equations", &[], "seven eight nine ten eleven twelve");
    let misaligned = item("Algebra/Systems", &[], "a b c d e f g");
    let bad_prereq = item("Algebra/Linear-Equations", &["Calculus/Limits"], "h i j k l m n");
    let mut hard = other.clone();
    hard.difficulty_tag = Difficulty::Advanced;
    hard.problem = "p q r s t u v".into();
    let mut unverified = other.clone();
    unverified.solution.verification = "looks fine".into();
    unverified.problem = "w x y z 1 2 3".into();

    let batch: Vec<Value> = [&ok, &dup, &other, &misaligned, &bad_prereq, &hard, &unverified]
        .iter()
        .map(|i| i.to_value())
        .chain([json!({"module": 3})])
        .collect();
    let report = filter_batch(&batch, &ctx, &[]);
    assert_eq!(report.accepted, vec![ok.clone(), other.clone()]);
    let got: Vec<(usize, BTreeSet<ReasonCode>)> = report.rejected.iter().map(|r| (r.item_index, r.codes())).collect();
    assert_eq!(got[0], (1, [ReasonCode::NearDuplicate].into()));
    assert_eq!(got[1], (3, [ReasonCode::StageMisaligned].into()));
    assert_eq!(got[2], (4, [ReasonCode::PrereqNotPermitted].into()));
    assert_eq!(got[3], (5, [ReasonCode::DifficultyAboveCap].into()));
    assert_eq!(got[4], (6, [ReasonCode::VerificationFailed].into()));
    assert!(got[5].1.contains(&ReasonCode::WrongType) && got[5].1.contains(&ReasonCode::MissingKey));
    assert!((report.acceptance_rate() - 0.25).abs() < 1e-12);

    // filtering accepted output again only flags duplicates of itself
    let again: Vec<Value> = report.accepted.iter().map(SynthesisItem::to_value).collect();
    assert_eq!(filter_batch(&again, &ctx, &[]).accepted.len(), 2);
    assert!(filter_batch(&again, &ctx, &report.accepted).accepted.is_empty());
}

#[test]
fn short_problems_dedup_whole() {
    let a = item("Algebra/Linear-Equations", &[], "hi there");
    let b = item("Algebra/Linear-Equations", &[], "HI   there");
    let c = item("Algebra/Linear-Equations", &[], "hi you");
    assert!(near_duplicates(&a, &b));
    assert!(!near_duplicates(&a, &c));
}
