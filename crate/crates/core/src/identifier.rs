//! Gap diagnosis, dependency estimation, severity ranking and target choice.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::{PerformanceSnapshot, PerformanceTrajectory};
use crate::knowledge::{DependencyGraph, ModuleId};
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum IdentifierError {
    #[error("teacher score is zero")]
    TeacherScoreZero,
    #[error("unknown module {0}")]
    UnknownModule(String),
    #[error("dependency of a module on itself ({0})")]
    SameModule(String),
    #[error("no deficient modules")]
    NoDeficientModules,
    #[error("target fraction {0} outside (0, 1]")]
    InvalidFraction(f64),
}

/// Relative shortfall of the student against the teacher.
pub fn compute_gap<S: Scalar>(p_teacher: S, p_student: S) -> Result<S, IdentifierError> {
    if !(p_teacher > S::zero()) {
        return Err(IdentifierError::TeacherScoreZero);
    }
    Ok((p_teacher - p_student) / p_teacher)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct GapReport<S> {
    pub gaps: BTreeMap<ModuleId, S>,
    pub tau_gap: S,
    /// Modules left out because the teacher scored zero on them.
    #[serde(default)]
    pub excluded: BTreeSet<ModuleId>,
}

impl<S: Scalar> GapReport<S> {
    pub fn from_snapshot(snapshot: &PerformanceSnapshot<S>, tau_gap: S) -> Self {
        let mut gaps = BTreeMap::new();
        let mut excluded = BTreeSet::new();
        for (k, ps) in &snapshot.student.scores {
            let pt = snapshot.teacher.score(k.as_str()).unwrap_or_else(S::zero);
            match compute_gap(pt, *ps) {
                Ok(g) => {
                    gaps.insert(k.clone(), g);
                }
                Err(_) => {
                    log::warn!("teacher scored 0 on {k}; excluded from diagnosis");
                    excluded.insert(k.clone());
                }
            }
        }
        Self { gaps, tau_gap, excluded }
    }

    pub fn gap(&self, k: &str) -> Option<S> {
        self.gaps.get(k).copied()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("gap report serializes")
    }
}

/// Modules whose gap is strictly above the report's threshold.
pub fn deficient_modules<S: Scalar>(report: &GapReport<S>) -> BTreeSet<ModuleId> {
    report
        .gaps
        .iter()
        .filter(|(_, g)| **g > report.tau_gap)
        .map(|(k, _)| k.clone())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DependencyMode {
    /// Observations at the first snapshot crossing each threshold.
    #[default]
    FirstCrossing,
    /// Means over every snapshot on each side of the thresholds.
    Averaged,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct DependencyParams<S> {
    pub tau_high: S,
    pub tau_low: S,
    pub epsilon: S,
    #[serde(default)]
    pub mode: DependencyMode,
}

impl<S: Scalar> Default for DependencyParams<S> {
    fn default() -> Self {
        Self {
            tau_high: S::of(0.9),
            tau_low: S::of(0.7),
            epsilon: S::of(0.01),
            mode: DependencyMode::FirstCrossing,
        }
    }
}

/// `clamp((a - b) / (a + epsilon), 0, 1)`.
pub fn dependency_contrast<S: Scalar>(a: S, b: S, epsilon: S) -> S {
    ((a - b) / (a + epsilon)).clamp_unit()
}

/// How strongly mastery of `k_i` goes with performance on `k_j` in the trajectory.
///
/// Snapshots where the ratio of `k_i` is undefined are skipped. A missing
/// observation on either side yields 0.
pub fn estimate_dependency<S: Scalar>(
    trajectory: &PerformanceTrajectory<S>,
    k_i: &str,
    k_j: &str,
    params: &DependencyParams<S>,
) -> Result<S, IdentifierError> {
    if k_i == k_j {
        return Err(IdentifierError::SameModule(k_i.to_string()));
    }
    for k in [k_i, k_j] {
        if !trajectory.snapshots().iter().any(|s| s.student.scores.contains_key(k)) {
            return Err(IdentifierError::UnknownModule(k.to_string()));
        }
    }
    let observations = trajectory
        .snapshots()
        .iter()
        .filter_map(|s| Some((s.ratio(k_i)?, s.student.score(k_j))));
    let (a, b) = match params.mode {
        DependencyMode::FirstCrossing => {
            let mut a = None;
            let mut b = None;
            for (ratio, sj) in observations {
                if a.is_none() && ratio >= params.tau_high {
                    a = Some(sj);
                }
                if b.is_none() && ratio < params.tau_low {
                    b = Some(sj);
                }
            }
            (a.flatten(), b.flatten())
        }
        DependencyMode::Averaged => {
            let (mut high, mut low) = (Vec::new(), Vec::new());
            for (ratio, sj) in observations {
                let Some(sj) = sj else { continue };
                if ratio >= params.tau_high {
                    high.push(sj);
                } else if ratio < params.tau_low {
                    low.push(sj);
                }
            }
            (S::mean(high), S::mean(low))
        }
    };
    Ok(match (a, b) {
        (Some(a), Some(b)) => dependency_contrast(a, b, params.epsilon),
        _ => S::zero(),
    })
}

/// A trajectory supporting dependency estimates. With a `subject`, only pairs
/// whose first member is the subject are read from it.
#[derive(Debug, Clone, PartialEq)]
pub struct Evidence<S> {
    pub subject: Option<ModuleId>,
    pub trajectory: PerformanceTrajectory<S>,
}

impl<S: Scalar> Evidence<S> {
    pub fn whole(trajectory: PerformanceTrajectory<S>) -> Self {
        Self { subject: None, trajectory }
    }
}

/// Raw strengths for every ordered pair of `modules`, maximised over the evidence.
pub fn pairwise_strengths<S: Scalar>(
    evidence: &[Evidence<S>],
    modules: &BTreeSet<ModuleId>,
    params: &DependencyParams<S>,
) -> BTreeMap<(ModuleId, ModuleId), S> {
    let mut out = BTreeMap::new();
    for ki in modules {
        for kj in modules.iter().filter(|kj| *kj != ki) {
            let best = evidence
                .iter()
                .filter(|e| e.subject.as_ref().is_none_or(|s| s == ki))
                .filter_map(|e| estimate_dependency(&e.trajectory, ki.as_str(), kj.as_str(), params).ok())
                .fold(S::zero(), S::max);
            out.insert((ki.clone(), kj.clone()), best);
        }
    }
    out
}

/// Keeps pairs above `tau_dep` and breaks any cycles.
pub fn build_graph<S: Scalar>(
    evidence: &[Evidence<S>],
    modules: &BTreeSet<ModuleId>,
    params: &DependencyParams<S>,
    tau_dep: S,
) -> DependencyGraph<S> {
    let mut graph = DependencyGraph::new(modules.iter().cloned());
    for ((ki, kj), s) in pairwise_strengths(evidence, modules, params) {
        if s > tau_dep {
            graph.add_edge(ki.as_str(), kj.as_str(), s).expect("distinct known vertices");
        }
    }
    let (graph, removed) = graph.finalize_acyclic();
    for e in removed {
        log::info!("dropped cyclic dependency {} -> {} ({})", e.from, e.to, e.strength);
    }
    graph
}

/// Blend of the gap and the mean strength of outgoing dependencies.
pub fn severity<S: Scalar>(
    k: &str,
    gaps: &GapReport<S>,
    graph: &DependencyGraph<S>,
    alpha: S,
) -> Result<S, IdentifierError> {
    let gap = gaps.gap(k).ok_or_else(|| IdentifierError::UnknownModule(k.to_string()))?;
    let spread = if graph.contains(k) {
        S::mean(graph.out_edges(k).map(|(_, s)| s)).unwrap_or_else(S::zero)
    } else {
        S::zero()
    };
    Ok(alpha * gap + (S::one() - alpha) * spread)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct SeverityRanking<S> {
    pub ranked: Vec<(ModuleId, S)>,
    pub alpha: S,
}

fn by_severity<S: Scalar>(a: &(ModuleId, S), b: &(ModuleId, S)) -> Ordering {
    b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then_with(|| a.0.cmp(&b.0))
}

pub fn rank_severity<S: Scalar>(
    modules: &BTreeSet<ModuleId>,
    gaps: &GapReport<S>,
    graph: &DependencyGraph<S>,
    alpha: S,
) -> Result<SeverityRanking<S>, IdentifierError> {
    let mut ranked = modules
        .iter()
        .map(|k| Ok((k.clone(), severity(k.as_str(), gaps, graph, alpha)?)))
        .collect::<Result<Vec<_>, IdentifierError>>()?;
    ranked.sort_by(by_severity);
    Ok(SeverityRanking { ranked, alpha })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct TargetSet<S> {
    pub modules: Vec<ModuleId>,
    pub fraction: S,
}

impl<S: Scalar> TargetSet<S> {
    pub fn as_set(&self) -> BTreeSet<ModuleId> {
        self.modules.iter().cloned().collect()
    }
}

/// `clamp(ceil(fraction * n), 1, n)`; products within 1e-9 of an integer
/// count as that integer so that e.g. 0.3 * 10 gives 3.
pub fn target_count<S: Scalar>(fraction: S, n: usize) -> usize {
    if n == 0 {
        return 0;
    }
    let x = fraction.to_f64_lossy() * n as f64;
    let nearest = x.round();
    let m = if (x - nearest).abs() <= 1e-9 * nearest.max(1.0) { nearest } else { x.ceil() };
    (m as usize).clamp(1, n)
}

pub fn select_targets<S: Scalar>(
    ranking: &SeverityRanking<S>,
    deficient: &BTreeSet<ModuleId>,
    fraction: S,
) -> Result<TargetSet<S>, IdentifierError> {
    if !(fraction > S::zero() && fraction <= S::one()) {
        return Err(IdentifierError::InvalidFraction(fraction.to_f64_lossy()));
    }
    if deficient.is_empty() {
        return Err(IdentifierError::NoDeficientModules);
    }
    if let Some(k) = deficient.iter().find(|k| !ranking.ranked.iter().any(|(r, _)| r == *k)) {
        return Err(IdentifierError::UnknownModule(k.to_string()));
    }
    let mut pool: Vec<(ModuleId, S)> = ranking
        .ranked
        .iter()
        .filter(|(k, _)| deficient.contains(k))
        .cloned()
        .collect();
    pool.sort_by(by_severity);
    let m = target_count(fraction, deficient.len());
    Ok(TargetSet {
        modules: pool.into_iter().take(m).map(|(k, _)| k).collect(),
        fraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::ScoreReport;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn gap_examples() {
        assert!(close(compute_gap(0.8, 0.4).unwrap(), 0.5));
        assert_eq!(compute_gap(0.7, 0.7).unwrap(), 0.0);
        assert_eq!(compute_gap(0.9, 0.0).unwrap(), 1.0);
        assert_eq!(compute_gap(0.0, 0.0), Err::<f64, _>(IdentifierError::TeacherScoreZero));
    }

    #[test]
    fn deficient_is_strict() {
        let report = GapReport {
            gaps: [("x/a", 0.5), ("x/b", 0.3), ("x/c", 0.31)].into_iter().map(|(k, g)| (k.into(), g)).collect(),
            tau_gap: 0.3,
            excluded: BTreeSet::new(),
        };
        let d: Vec<String> = deficient_modules(&report).into_iter().map(|k| k.to_string()).collect();
        assert_eq!(d, ["x/a", "x/c"]);
    }

    fn scores(pairs: &[(&str, f64)]) -> ScoreReport<f64> {
        let mut r = ScoreReport::new();
        for (k, s) in pairs {
            r.insert((*k).into(), *s, 1).unwrap();
        }
        r
    }

    /// Trajectory over modules i and j with the given (student i, student j) per step; teacher 1.0.
    fn traj(points: &[(f64, f64)]) -> PerformanceTrajectory<f64> {
        let mut t = PerformanceTrajectory::new();
        for (step, (si, sj)) in points.iter().enumerate() {
            t = t
                .append_snapshot(step as u64, scores(&[("m/i", *si), ("m/j", *sj)]), scores(&[("m/i", 1.0), ("m/j", 1.0)]))
                .unwrap();
        }
        t
    }

    #[test]
    fn dependency_examples() {
        let p = DependencyParams::default();
        let t = traj(&[(0.1, 0.2), (0.5, 0.3), (0.95, 0.6), (0.2, 0.1)]);
        let d = estimate_dependency(&t, "m/i", "m/j", &p).unwrap();
        assert!(close(d, 0.4 / 0.61));
        assert_eq!(estimate_dependency(&traj(&[(0.1, 0.5), (0.95, 0.5)]), "m/i", "m/j", &p).unwrap(), 0.0);
        assert_eq!(estimate_dependency(&traj(&[(0.1, 0.2), (0.8, 0.9)]), "m/i", "m/j", &p).unwrap(), 0.0);
        // A below B clamps to zero
        assert_eq!(estimate_dependency(&traj(&[(0.1, 0.9), (0.95, 0.1)]), "m/i", "m/j", &p).unwrap(), 0.0);
        assert!(matches!(estimate_dependency(&t, "m/i", "m/z", &p), Err(IdentifierError::UnknownModule(_))));
        assert!(matches!(estimate_dependency(&t, "m/i", "m/i", &p), Err(IdentifierError::SameModule(_))));
    }

    #[test]
    fn averaged_variant() {
        let p = DependencyParams { mode: DependencyMode::Averaged, ..Default::default() };
        let t = traj(&[(0.1, 0.2), (0.2, 0.4), (0.95, 0.6), (0.99, 0.8)]);
        let d = estimate_dependency(&t, "m/i", "m/j", &p).unwrap();
        assert!(close(d, (0.7 - 0.3) / 0.71));
    }

    #[test]
    fn graph_respects_subjects() {
        let p = DependencyParams::default();
        let modules: BTreeSet<ModuleId> = ["m/i".into(), "m/j".into()].into();
        let t = traj(&[(0.1, 0.1), (0.95, 0.85)]);
        let g = build_graph(&[Evidence::whole(t.clone())], &modules, &p, 0.3);
        assert_eq!(g.edge_count(), 1);
        assert!(g.strength("m/i", "m/j").is_some());
        let only_j = Evidence { subject: Some("m/j".into()), trajectory: t };
        assert_eq!(build_graph(&[only_j], &modules, &p, 0.3).edge_count(), 0);
    }

    #[test]
    fn severity_examples() {
        let gaps = GapReport {
            gaps: [("m/k", 0.5), ("m/x", 0.4)].into_iter().map(|(k, g)| (k.into(), g)).collect(),
            tau_gap: 0.3,
            excluded: BTreeSet::new(),
        };
        let mut g = DependencyGraph::new(["m/k", "m/a", "m/b", "m/x"]);
        g.add_edge("m/k", "m/a", 0.4).unwrap();
        g.add_edge("m/k", "m/b", 0.6).unwrap();
        assert!(close(severity("m/k", &gaps, &g, 0.7).unwrap(), 0.5));
        assert!(close(severity("m/k", &gaps, &g, 1.0).unwrap(), 0.5));
        assert!(close(severity("m/x", &gaps, &g, 0.7).unwrap(), 0.28));
    }

    fn ranking(pairs: &[(&str, f64)]) -> SeverityRanking<f64> {
        SeverityRanking { ranked: pairs.iter().map(|(k, s)| ((*k).into(), *s)).collect(), alpha: 0.7 }
    }

    #[test]
    fn target_examples() {
        assert_eq!(target_count(0.25, 10), 3);
        assert_eq!(target_count(0.3, 10), 3);
        assert_eq!(target_count(0.2, 10), 2);
        assert_eq!(target_count(0.01, 10), 1);
        let r = ranking(&[("m/a", 0.9)]);
        let one: BTreeSet<ModuleId> = ["m/a".into()].into();
        assert_eq!(select_targets(&r, &one, 0.25).unwrap().modules, vec![ModuleId::from("m/a")]);

        let names = ["m/h", "m/g", "m/f", "m/e", "m/d", "m/c", "m/b", "m/a"];
        let sev = [0.9, 0.5, 0.5, 0.4, 0.3, 0.2, 0.1, 0.05];
        let pairs: Vec<(&str, f64)> = names.iter().copied().zip(sev).collect();
        let all: BTreeSet<ModuleId> = names.iter().map(|n| (*n).into()).collect();
        let t = select_targets(&ranking(&pairs), &all, 0.25).unwrap();
        assert_eq!(t.modules, vec![ModuleId::from("m/h"), ModuleId::from("m/f")]);

        assert_eq!(select_targets(&r, &BTreeSet::new(), 0.25), Err(IdentifierError::NoDeficientModules));
        assert!(matches!(select_targets(&r, &one, 0.0), Err(IdentifierError::InvalidFraction(_))));
    }
}
