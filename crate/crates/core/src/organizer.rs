//! Stage construction, difficulty-increment repair and the mastery gate.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::{PerformanceSnapshot, ScoreReport};
use crate::identifier::TargetSet;
use crate::knowledge::{DependencyGraph, KnowledgeError, ModuleId};
use crate::scalar::Scalar;

pub const EPS_DIV: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum OrganizerError {
    #[error("module {0} has no score")]
    UnscoredModule(String),
    #[error("teacher score for {0} is zero")]
    TeacherScoreZero(String),
    #[error(transparent)]
    Graph(#[from] KnowledgeError),
}

/// Student-perceived difficulty `1 - ps / max(pt, eps)`, clamped to `[0, 1]`.
pub fn difficulty<S: Scalar>(p_student: S, p_teacher: S) -> S {
    (S::one() - p_student / p_teacher.max(S::of(EPS_DIV))).clamp_unit()
}

/// Whether moving from `prev` to `next` average difficulty stays within the bound.
pub fn zpd_allows<S: Scalar>(prev: S, next: S, tau_zpd: S) -> bool {
    next - prev <= tau_zpd * prev
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZpdFlag {
    Pass,
    /// Still over the bound after splitting; bridging items are synthesized first.
    Warn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct Stage<S> {
    pub stage_id: String,
    pub level: usize,
    pub category: String,
    pub modules: BTreeSet<ModuleId>,
    pub difficulties: BTreeMap<ModuleId, S>,
    pub avg_difficulty: S,
}

impl<S: Scalar> Stage<S> {
    fn assemble(level: usize, category: &str, ordinal: usize, difficulties: BTreeMap<ModuleId, S>) -> Self {
        let avg_difficulty = S::mean(difficulties.values().copied()).expect("stage is non-empty");
        Self {
            stage_id: format!("S{level}-{category}-{ordinal}"),
            level,
            category: category.to_string(),
            modules: difficulties.keys().cloned().collect(),
            difficulties,
            avg_difficulty,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct Curriculum<S> {
    pub stages: Vec<Stage<S>>,
    /// `zpd_flags[i]` marks the transition into `stages[i]`; the first is always `Pass`.
    pub zpd_flags: Vec<ZpdFlag>,
}

impl<S: Scalar> Curriculum<S> {
    pub fn empty() -> Self {
        Self { stages: Vec::new(), zpd_flags: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    pub fn modules(&self) -> impl Iterator<Item = &ModuleId> {
        self.stages.iter().flat_map(|s| s.modules.iter())
    }

    /// Index of the stage containing `k`.
    pub fn stage_of(&self, k: &str) -> Option<usize> {
        self.stages.iter().position(|s| s.modules.contains(k))
    }

    /// Every in-curriculum prerequisite of every module sits in an earlier stage.
    pub fn is_prerequisite_closed(&self, graph: &DependencyGraph<S>, tau_dep: S) -> bool {
        self.stages.iter().enumerate().all(|(i, stage)| {
            stage.modules.iter().all(|k| {
                graph
                    .prerequisites(k.as_str(), tau_dep)
                    .map(|pre| {
                        pre.iter()
                            .filter_map(|p| self.stage_of(p.as_str()))
                            .all(|j| j < i)
                    })
                    .unwrap_or(true)
            })
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("curriculum serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

fn cmp_scalar<S: Scalar>(a: S, b: S) -> Ordering {
    a.partial_cmp(&b).unwrap_or(Ordering::Equal)
}

/// Levels the targets topologically, groups each level by category and
/// orders groups by ascending average difficulty, then category.
pub fn build_curriculum<S: Scalar>(
    targets: &TargetSet<S>,
    graph: &DependencyGraph<S>,
    initial: &PerformanceSnapshot<S>,
    tau_dep: S,
) -> Result<Curriculum<S>, OrganizerError> {
    let mut difficulties = BTreeMap::new();
    for k in &targets.modules {
        let ps = initial.student.score(k.as_str());
        let pt = initial.teacher.score(k.as_str());
        let (Some(ps), Some(pt)) = (ps, pt) else {
            return Err(OrganizerError::UnscoredModule(k.to_string()));
        };
        difficulties.insert(k.clone(), difficulty(ps, pt));
    }
    let mut leveling = graph.clone();
    for k in &targets.modules {
        leveling.insert_vertex(k.clone());
    }
    let levels = leveling.topological_levels(&targets.as_set(), tau_dep)?;
    let mut stages = Vec::new();
    for (li, level) in levels.iter().enumerate() {
        let mut groups: BTreeMap<&str, BTreeMap<ModuleId, S>> = BTreeMap::new();
        for k in level {
            groups.entry(k.category()).or_default().insert(k.clone(), difficulties[k]);
        }
        let mut level_stages: Vec<Stage<S>> = groups
            .into_iter()
            .map(|(cat, ds)| Stage::assemble(li + 1, cat, 1, ds))
            .collect();
        level_stages.sort_by(|a, b| {
            cmp_scalar(a.avg_difficulty, b.avg_difficulty).then_with(|| a.category.cmp(&b.category))
        });
        stages.extend(level_stages);
    }
    let zpd_flags = vec![ZpdFlag::Pass; stages.len()];
    Ok(Curriculum { stages, zpd_flags })
}

/// Splits stages whose difficulty jump over the preceding stage exceeds the
/// bound. Modules are taken in ascending difficulty and packed greedily; a
/// single module that still violates the bound forms its own flagged stage.
pub fn enforce_zpd<S: Scalar>(curriculum: Curriculum<S>, tau_zpd: S) -> Curriculum<S> {
    let mut stages: Vec<Stage<S>> = Vec::new();
    let mut flags = Vec::new();
    for (stage, flag) in curriculum.stages.into_iter().zip(curriculum.zpd_flags) {
        let Some(prev) = stages.last().map(|s| s.avg_difficulty) else {
            stages.push(stage);
            flags.push(flag);
            continue;
        };
        if zpd_allows(prev, stage.avg_difficulty, tau_zpd) {
            stages.push(stage);
            flags.push(ZpdFlag::Pass);
            continue;
        }
        let mut order: Vec<(ModuleId, S)> = stage.difficulties.into_iter().collect();
        order.sort_by(|a, b| cmp_scalar(a.1, b.1).then_with(|| a.0.cmp(&b.0)));
        let mut prev = prev;
        let mut group: BTreeMap<ModuleId, S> = BTreeMap::new();
        let mut ordinal = 0;
        let mut close = |group: BTreeMap<ModuleId, S>, prev: &mut S, stages: &mut Vec<Stage<S>>| {
            ordinal += 1;
            let s = Stage::assemble(stage.level, &stage.category, ordinal, group);
            let ok = zpd_allows(*prev, s.avg_difficulty, tau_zpd);
            *prev = s.avg_difficulty;
            stages.push(s);
            flags.push(if ok { ZpdFlag::Pass } else { ZpdFlag::Warn });
        };
        for (k, d) in order {
            if !group.is_empty() {
                let n = S::of_usize(group.len() + 1);
                let avg = (group.values().fold(S::zero(), |a, b| a + *b) + d) / n;
                if !zpd_allows(prev, avg, tau_zpd) {
                    close(std::mem::take(&mut group), &mut prev, &mut stages);
                }
            }
            group.insert(k, d);
        }
        close(group, &mut prev, &mut stages);
    }
    Curriculum { stages, zpd_flags: flags }
}

/// Reading of the bound over raw student scores instead of difficulty; one
/// entry per transition, for diagnostics only.
pub fn raw_score_transitions<S: Scalar>(curriculum: &Curriculum<S>, student: &ScoreReport<S>, tau_zpd: S) -> Vec<bool> {
    let avg = |s: &Stage<S>| S::mean(s.modules.iter().filter_map(|k| student.score(k.as_str()))).unwrap_or_else(S::zero);
    curriculum
        .stages
        .windows(2)
        .map(|w| zpd_allows(avg(&w[0]), avg(&w[1]), tau_zpd))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct MasteryDecision<S> {
    pub advance: bool,
    pub min_ratio: S,
    pub failing_modules: BTreeSet<ModuleId>,
}

pub fn mastery_gate<S: Scalar>(
    student: &ScoreReport<S>,
    teacher: &ScoreReport<S>,
    modules: &BTreeSet<ModuleId>,
    tau_mastery: S,
) -> Result<MasteryDecision<S>, OrganizerError> {
    let mut min_ratio = S::infinity();
    let mut failing_modules = BTreeSet::new();
    for k in modules {
        let ps = student.score(k.as_str()).ok_or_else(|| OrganizerError::UnscoredModule(k.to_string()))?;
        let pt = teacher.score(k.as_str()).ok_or_else(|| OrganizerError::UnscoredModule(k.to_string()))?;
        if !(pt > S::zero()) {
            return Err(OrganizerError::TeacherScoreZero(k.to_string()));
        }
        let ratio = ps / pt;
        min_ratio = min_ratio.min(ratio);
        if ratio < tau_mastery {
            failing_modules.insert(k.clone());
        }
    }
    if modules.is_empty() {
        min_ratio = S::one();
    }
    Ok(MasteryDecision { advance: min_ratio >= tau_mastery, min_ratio, failing_modules })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stage(level: usize, cat: &str, ds: &[(&str, f64)]) -> Stage<f64> {
        Stage::assemble(level, cat, 1, ds.iter().map(|(k, d)| (ModuleId::from(*k), *d)).collect())
    }

    fn report(pairs: &[(&str, f64)]) -> ScoreReport<f64> {
        let mut r = ScoreReport::new();
        for (k, s) in pairs {
            r.insert((*k).into(), *s, 1).unwrap();
        }
        r
    }

    #[test]
    fn zpd_inequality_examples() {
        assert!(zpd_allows(0.40, 0.46, 0.15));
        assert!(zpd_allows(0.40, 0.40, 0.15));
        assert!(!zpd_allows(0.40, 0.47, 0.15));
    }

    #[test]
    fn split_example() {
        let c = Curriculum {
            stages: vec![stage(1, "m", &[("m/p", 0.40)]), stage(2, "m", &[("m/k1", 0.47), ("m/k2", 0.60)])],
            zpd_flags: vec![ZpdFlag::Pass; 2],
        };
        let out = enforce_zpd(c, 0.15);
        let ids: Vec<&str> = out.stages.iter().map(|s| s.stage_id.as_str()).collect();
        assert_eq!(ids, ["S1-m-1", "S2-m-1", "S2-m-2"]);
        assert_eq!(out.stages[1].modules.iter().next().unwrap().as_str(), "m/k1");
        // 0.47 - 0.40 > 0.06 and 0.60 - 0.47 > 0.0705: both singletons stay flagged
        assert_eq!(out.zpd_flags, [ZpdFlag::Pass, ZpdFlag::Warn, ZpdFlag::Warn]);
    }

    #[test]
    fn split_packs_greedily() {
        let c = Curriculum {
            stages: vec![stage(1, "m", &[("m/p", 0.40)]), stage(2, "m", &[("m/a", 0.42), ("m/b", 0.44), ("m/c", 0.90)])],
            zpd_flags: vec![ZpdFlag::Pass; 2],
        };
        let out = enforce_zpd(c, 0.15);
        assert_eq!(out.stages.len(), 3);
        assert_eq!(out.stages[1].modules.len(), 2);
        assert_eq!(out.zpd_flags, [ZpdFlag::Pass, ZpdFlag::Pass, ZpdFlag::Warn]);
    }

    fn snapshot(pairs: &[(&str, f64)]) -> PerformanceSnapshot<f64> {
        let teacher: Vec<(&str, f64)> = pairs.iter().map(|(k, _)| (*k, 1.0)).collect();
        PerformanceSnapshot::new(0, report(pairs), report(&teacher)).unwrap()
    }

    fn targets(ids: &[&str]) -> TargetSet<f64> {
        TargetSet { modules: ids.iter().map(|k| ModuleId::from(*k)).collect(), fraction: 0.25 }
    }

    #[test]
    fn chain_gives_three_stages() {
        let mut g = DependencyGraph::new(["m/a", "m/b", "m/c"]);
        g.add_edge("m/a", "m/b", 0.8).unwrap();
        g.add_edge("m/b", "m/c", 0.8).unwrap();
        let snap = snapshot(&[("m/a", 0.1), ("m/b", 0.1), ("m/c", 0.1)]);
        let c = build_curriculum(&targets(&["m/c", "m/a", "m/b"]), &g, &snap, 0.3).unwrap();
        let order: Vec<Vec<&str>> = c.stages.iter().map(|s| s.modules.iter().map(|m| m.as_str()).collect()).collect();
        assert_eq!(order, [["m/a"], ["m/b"], ["m/c"]]);
        assert!(c.is_prerequisite_closed(&g, 0.3));
        assert_eq!(c.stages[2].stage_id, "S3-m-1");
    }

    #[test]
    fn level_groups_by_category() {
        let g = DependencyGraph::new(["alg/x", "alg/y", "geo/z"]);
        let snap = snapshot(&[("alg/x", 0.2), ("alg/y", 0.3), ("geo/z", 0.6)]);
        let c = build_curriculum(&targets(&["alg/x", "alg/y", "geo/z"]), &g, &snap, 0.3).unwrap();
        assert_eq!(c.stages.len(), 2);
        assert_eq!(c.stages[0].stage_id, "S1-geo-1");
        assert_eq!(c.stages[1].modules.len(), 2);
        assert!(matches!(
            build_curriculum(&targets(&["alg/q"]), &g, &snap, 0.3),
            Err(OrganizerError::UnscoredModule(_))
        ));
    }

    #[test]
    fn gate_examples() {
        let t = report(&[("m/a", 1.0), ("m/b", 1.0)]);
        let both: BTreeSet<ModuleId> = ["m/a".into(), "m/b".into()].into();
        let d = mastery_gate(&report(&[("m/a", 0.92), ("m/b", 0.95)]), &t, &both, 0.9).unwrap();
        assert!(d.advance);
        let one: BTreeSet<ModuleId> = ["m/a".into()].into();
        assert!(mastery_gate(&report(&[("m/a", 0.9)]), &t, &one, 0.9).unwrap().advance);
        let d = mastery_gate(&report(&[("m/a", 0.95), ("m/b", 0.89)]), &t, &both, 0.9).unwrap();
        assert!(!d.advance);
        assert_eq!(d.failing_modules, ["m/b".into()].into());
        let zero = report(&[("m/a", 0.0)]);
        assert!(matches!(
            mastery_gate(&zero, &zero, &one, 0.9),
            Err(OrganizerError::TeacherScoreZero(_))
        ));
    }

    #[test]
    fn raw_reading_is_separate() {
        let c = Curriculum {
            stages: vec![stage(1, "m", &[("m/a", 0.5)]), stage(2, "m", &[("m/b", 0.5)])],
            zpd_flags: vec![ZpdFlag::Pass; 2],
        };
        assert_eq!(raw_score_transitions(&c, &report(&[("m/a", 0.2), ("m/b", 0.9)]), 0.15), [false]);
    }
}
