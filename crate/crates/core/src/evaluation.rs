//! Probe scoring and performance trajectories.
//!
//! Open-ended probes are scored with ROUGE-L over lower-cased whitespace
//! tokens; verifiable probes with normalized exact match. Module scores are
//! the arithmetic mean of per-probe scores.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ProbeSet, TaskKind};
use crate::knowledge::ModuleId;
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum EvaluationError {
    #[error("no answer for probe {0}")]
    MissingAnswer(String),
    #[error("probe set for {0} is empty")]
    EmptyProbeSet(String),
    #[error("score {score} for {module} is outside [0, 1]")]
    ScoreOutOfRange { module: String, score: f64 },
    #[error("probe count for {0} must be at least 1")]
    ZeroCount(String),
    #[error("teacher report does not cover {0}")]
    TeacherMissing(String),
    #[error("step {step} does not follow {last}")]
    NonMonotonicStep { step: u64, last: u64 },
    #[error("snapshot line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase().split_whitespace().map(str::to_string).collect()
}

/// Length of the longest common subsequence of two token sequences.
///
/// Bit-parallel formulation: one bit per `b` position, processed in 64-bit
/// words with carry/borrow propagated across words.
pub fn lcs_len<T: Eq + std::hash::Hash>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let words = b.len().div_ceil(64);
    let mut masks: HashMap<&T, Vec<u64>> = HashMap::new();
    for (j, tok) in b.iter().enumerate() {
        masks.entry(tok).or_insert_with(|| vec![0; words])[j / 64] |= 1 << (j % 64);
    }
    let tail = b.len() % 64;
    let top_mask = if tail == 0 { u64::MAX } else { (1u64 << tail) - 1 };
    let mut v = vec![u64::MAX; words];
    let mut u = vec![0u64; words];
    for tok in a {
        let Some(m) = masks.get(tok) else { continue };
        for w in 0..words {
            u[w] = v[w] & m[w];
        }
        // v = (v + u) | (v - u)
        let (mut carry, mut borrow) = (false, false);
        for w in 0..words {
            let (s1, c1) = v[w].overflowing_add(u[w]);
            let (s2, c2) = s1.overflowing_add(carry as u64);
            carry = c1 || c2;
            let (d1, b1) = v[w].overflowing_sub(u[w]);
            let (d2, b2) = d1.overflowing_sub(borrow as u64);
            borrow = b1 || b2;
            v[w] = s2 | d2;
        }
    }
    let zeros: u32 = v
        .iter()
        .enumerate()
        .map(|(w, x)| {
            let mask = if w + 1 == words { top_mask } else { u64::MAX };
            (!x & mask).count_ones()
        })
        .sum();
    zeros as usize
}

/// LCS-based F-measure between two token sequences.
pub fn rouge_l_tokens<S: Scalar, T: Eq + std::hash::Hash>(candidate: &[T], reference: &[T]) -> S {
    let lcs = lcs_len(candidate, reference);
    if lcs == 0 {
        return S::zero();
    }
    let lcs = S::of_usize(lcs);
    let p = lcs / S::of_usize(candidate.len());
    let r = lcs / S::of_usize(reference.len());
    (S::of(2.0) * p * r) / (p + r)
}

pub fn rouge_l<S: Scalar>(candidate: &str, reference: &str) -> S {
    rouge_l_tokens(&tokenize(candidate), &tokenize(reference))
}

/// Trim, collapse internal whitespace and case-fold; plain decimal numbers
/// additionally lose leading zeros and a single trailing `.0`.
pub fn normalize_answer(text: &str) -> String {
    let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    canonical_number(&collapsed).unwrap_or(collapsed)
}

fn canonical_number(s: &str) -> Option<String> {
    let (sign, body) = match s.strip_prefix(['-', '+']) {
        Some(rest) => (if s.starts_with('-') { "-" } else { "" }, rest),
        None => ("", s),
    };
    let (int, frac) = match body.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (body, None),
    };
    let digits = |x: &str| !x.is_empty() && x.bytes().all(|b| b.is_ascii_digit());
    if !digits(int) || frac.is_some_and(|f| !digits(f)) {
        return None;
    }
    let int = int.trim_start_matches('0');
    let int = if int.is_empty() { "0" } else { int };
    let frac = frac.filter(|f| *f != "0");
    let sign = if int == "0" && frac.is_none() { "" } else { sign };
    Some(match frac {
        Some(f) => format!("{sign}{int}.{f}"),
        None => format!("{sign}{int}"),
    })
}

pub fn exact_match<S: Scalar>(candidate: &str, reference: &str) -> S {
    if normalize_answer(candidate) == normalize_answer(reference) {
        S::one()
    } else {
        S::zero()
    }
}

/// Scores every probe and returns `(module mean, per-probe scores)`.
pub fn evaluate_probes<S: Scalar>(
    answers: &BTreeMap<String, String>,
    probe_set: &ProbeSet,
) -> Result<(S, Vec<(String, S)>), EvaluationError> {
    let per_probe = probe_set
        .probes
        .iter()
        .map(|p| {
            let answer = answers
                .get(&p.id)
                .ok_or_else(|| EvaluationError::MissingAnswer(p.id.clone()))?;
            let score = match p.task_kind {
                TaskKind::Verifiable => exact_match(answer, &p.reference),
                TaskKind::OpenEnded => rouge_l(answer, &p.reference),
            };
            Ok((p.id.clone(), score))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mean = S::mean(per_probe.iter().map(|(_, s)| *s))
        .ok_or_else(|| EvaluationError::EmptyProbeSet(probe_set.module_id.to_string()))?;
    Ok((mean, per_probe))
}

/// Per-module scores with the number of probes behind each.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct ScoreReport<S> {
    pub scores: BTreeMap<ModuleId, S>,
    pub counts: BTreeMap<ModuleId, usize>,
}

impl<S: Scalar> ScoreReport<S> {
    pub fn new() -> Self {
        Self {
            scores: BTreeMap::new(),
            counts: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, module: ModuleId, score: S, count: usize) -> Result<(), EvaluationError> {
        if !(score >= S::zero() && score <= S::one()) {
            return Err(EvaluationError::ScoreOutOfRange {
                module: module.to_string(),
                score: score.to_f64_lossy(),
            });
        }
        if count == 0 {
            return Err(EvaluationError::ZeroCount(module.to_string()));
        }
        self.scores.insert(module.clone(), score);
        self.counts.insert(module, count);
        Ok(())
    }

    pub fn score(&self, module: &str) -> Option<S> {
        self.scores.get(module).copied()
    }

    /// Restriction to the given modules (missing ones are skipped).
    pub fn restricted<'a>(&self, modules: impl IntoIterator<Item = &'a ModuleId>) -> Self {
        let mut out = Self::new();
        for m in modules {
            if let (Some(s), Some(c)) = (self.scores.get(m), self.counts.get(m)) {
                out.scores.insert(m.clone(), *s);
                out.counts.insert(m.clone(), *c);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceSnapshot<S> {
    pub step: u64,
    pub student: ScoreReport<S>,
    pub teacher: ScoreReport<S>,
}

/// Persisted line shape: `{step, student: {module: score}, teacher: {module: score}}`
/// plus the probe counts backing the scores.
#[derive(Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
struct SnapshotLine<S> {
    step: u64,
    student: BTreeMap<ModuleId, S>,
    teacher: BTreeMap<ModuleId, S>,
    #[serde(default)]
    probe_counts: BTreeMap<ModuleId, usize>,
}

impl<S: Scalar> PerformanceSnapshot<S> {
    pub fn new(step: u64, student: ScoreReport<S>, teacher: ScoreReport<S>) -> Result<Self, EvaluationError> {
        if let Some(m) = student.scores.keys().find(|m| !teacher.scores.contains_key(*m)) {
            return Err(EvaluationError::TeacherMissing(m.to_string()));
        }
        Ok(Self { step, student, teacher })
    }

    /// Student/teacher ratio for one module; `None` when absent or teacher is 0.
    pub fn ratio(&self, module: &str) -> Option<S> {
        let t = self.teacher.score(module)?;
        let s = self.student.score(module)?;
        (t > S::zero()).then(|| s / t)
    }

    pub fn to_json_line(&self) -> String {
        let mut probe_counts = self.teacher.counts.clone();
        probe_counts.extend(self.student.counts.iter().map(|(k, v)| (k.clone(), *v)));
        serde_json::to_string(&SnapshotLine {
            step: self.step,
            student: self.student.scores.clone(),
            teacher: self.teacher.scores.clone(),
            probe_counts,
        })
        .expect("snapshot serializes")
    }

    pub fn from_json_line(line: &str) -> Result<Self, String> {
        let wire: SnapshotLine<S> = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let report = |scores: BTreeMap<ModuleId, S>| -> Result<ScoreReport<S>, String> {
            let mut r = ScoreReport::new();
            for (m, s) in scores {
                let c = wire.probe_counts.get(&m).copied().unwrap_or(1);
                r.insert(m, s, c).map_err(|e| e.to_string())?;
            }
            Ok(r)
        };
        let student = report(wire.student.clone())?;
        let teacher = report(wire.teacher.clone())?;
        Self::new(wire.step, student, teacher).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceTrajectory<S> {
    snapshots: Vec<PerformanceSnapshot<S>>,
}

impl<S: Scalar> Default for PerformanceTrajectory<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> PerformanceTrajectory<S> {
    pub fn new() -> Self {
        Self { snapshots: Vec::new() }
    }

    pub fn snapshots(&self) -> &[PerformanceSnapshot<S>] {
        &self.snapshots
    }

    pub fn last(&self) -> Option<&PerformanceSnapshot<S>> {
        self.snapshots.last()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn push(&mut self, snapshot: PerformanceSnapshot<S>) -> Result<(), EvaluationError> {
        if let Some(last) = self.snapshots.last() {
            if snapshot.step <= last.step {
                return Err(EvaluationError::NonMonotonicStep {
                    step: snapshot.step,
                    last: last.step,
                });
            }
        }
        self.snapshots.push(snapshot);
        Ok(())
    }

    pub fn append_snapshot(
        mut self,
        step: u64,
        student: ScoreReport<S>,
        teacher: ScoreReport<S>,
    ) -> Result<Self, EvaluationError> {
        self.push(PerformanceSnapshot::new(step, student, teacher)?)?;
        Ok(self)
    }

    pub fn from_jsonl(text: &str) -> Result<Self, EvaluationError> {
        let mut t = Self::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let snap = PerformanceSnapshot::from_json_line(line)
                .map_err(|message| EvaluationError::Parse { line: i + 1, message })?;
            t.push(snap)?;
        }
        Ok(t)
    }

    pub fn to_jsonl(&self) -> String {
        self.snapshots.iter().map(|s| s.to_json_line() + "\n").collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{SeedItem, Split};

    #[test]
    fn rouge_examples() {
        assert_eq!(rouge_l::<f64>("the cat", "the cat"), 1.0);
        assert_eq!(rouge_l::<f64>("a b c", "d e f"), 0.0);
        assert_eq!(rouge_l::<f64>("", "d e f"), 0.0);
        let f: f64 = rouge_l("the cat sat on the mat", "the cat lay on the mat");
        assert!((f - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(rouge_l::<f64>("The CAT", "the cat"), 1.0);
    }

    #[test]
    fn lcs_across_word_boundaries() {
        let a: Vec<u32> = (0..150).collect();
        let b: Vec<u32> = (0..150).filter(|x| x % 3 != 0).collect();
        assert_eq!(lcs_len(&a, &b), b.len());
        let rev: Vec<u32> = a.iter().rev().copied().collect();
        assert_eq!(lcs_len(&a, &rev), 1);
    }

    #[test]
    fn exact_match_examples() {
        assert_eq!(exact_match::<f64>(" 42 ", "42"), 1.0);
        assert_eq!(exact_match::<f64>("42", "43"), 0.0);
        assert_eq!(exact_match::<f64>("X = 4, Y = 3", "x = 4, y = 3"), 1.0);
        assert_eq!(exact_match::<f64>("007", "7"), 1.0);
        assert_eq!(exact_match::<f64>("42.0", "42"), 1.0);
        assert_eq!(exact_match::<f64>("-0.0", "0"), 1.0);
        assert_eq!(exact_match::<f64>("42.5", "42.50"), 0.0);
    }

    fn probe(id: &str, kind: TaskKind, reference: &str) -> SeedItem {
        SeedItem {
            id: id.into(),
            module_id: "m/a".into(),
            prompt: format!("prompt {id}"),
            reference: reference.into(),
            task_kind: kind,
            split: Some(Split::Validation),
        }
    }

    #[test]
    fn probe_means() {
        let set = ProbeSet {
            module_id: "m/a".into(),
            probes: (0..4).map(|i| probe(&i.to_string(), TaskKind::Verifiable, "1")).collect(),
        };
        let answers: BTreeMap<String, String> =
            (0..4).map(|i| (i.to_string(), if i < 3 { "1" } else { "2" }.to_string())).collect();
        let (score, per): (f64, _) = evaluate_probes(&answers, &set).unwrap();
        assert_eq!(score, 0.75);
        assert_eq!(per.len(), 4);

        let open = ProbeSet {
            module_id: "m/a".into(),
            probes: vec![
                probe("x", TaskKind::OpenEnded, "the cat lay on the mat"),
                probe("y", TaskKind::OpenEnded, "a b c d"),
            ],
        };
        let answers = BTreeMap::from([
            ("x".to_string(), "the cat sat on the mat".to_string()),
            ("y".to_string(), "a b".to_string()),
        ]);
        let (score, _): (f64, _) = evaluate_probes(&answers, &open).unwrap();
        // (5/6 + 2/3) / 2
        assert!((score - 0.75).abs() < 1e-12);

        let missing = BTreeMap::new();
        assert_eq!(
            evaluate_probes::<f64>(&missing, &open).unwrap_err(),
            EvaluationError::MissingAnswer("x".into())
        );
    }

    #[test]
    fn mixed_kinds_all_correct() {
        let set = ProbeSet {
            module_id: "m/a".into(),
            probes: vec![probe("1", TaskKind::Verifiable, "12"), probe("2", TaskKind::OpenEnded, "long text here")],
        };
        let answers = set.probes.iter().map(|p| (p.id.clone(), p.reference.clone())).collect();
        assert_eq!(evaluate_probes::<f32>(&answers, &set).unwrap().0, 1.0);
    }

    fn report(pairs: &[(&str, f64)]) -> ScoreReport<f64> {
        let mut r = ScoreReport::new();
        for (m, s) in pairs {
            r.insert(ModuleId::from(*m), *s, 2).unwrap();
        }
        r
    }

    #[test]
    fn trajectory_rules() {
        let t = PerformanceTrajectory::new()
            .append_snapshot(0, report(&[("m/a", 0.2)]), report(&[("m/a", 0.9)]))
            .unwrap()
            .append_snapshot(3, report(&[("m/a", 0.5)]), report(&[("m/a", 0.9)]))
            .unwrap();
        let err = t.clone().append_snapshot(3, report(&[]), report(&[])).unwrap_err();
        assert_eq!(err, EvaluationError::NonMonotonicStep { step: 3, last: 3 });
        assert!(matches!(
            PerformanceSnapshot::new(9, report(&[("m/a", 0.1)]), report(&[])),
            Err(EvaluationError::TeacherMissing(_))
        ));
        let text = t.to_jsonl();
        assert!(text.starts_with("{\"step\":0,\"student\":{\"m/a\":0.2},\"teacher\":{\"m/a\":0.9}"));
        assert_eq!(PerformanceTrajectory::from_jsonl(&text).unwrap(), t);
        assert!(ScoreReport::<f64>::new().insert("m/a".into(), 1.2, 1).is_err());
    }

    proptest::proptest! {
        #[test]
        fn rouge_bounds_and_symmetry(a in "[a-d ]{0,30}", b in "[a-d ]{0,30}") {
            let ab: f64 = rouge_l(&a, &b);
            let ba: f64 = rouge_l(&b, &a);
            proptest::prop_assert!((0.0..=1.0).contains(&ab));
            proptest::prop_assert!((ab - ba).abs() < 1e-15);
            if !a.trim().is_empty() {
                proptest::prop_assert_eq!(rouge_l::<f64>(&a, &a), 1.0);
            }
        }

        #[test]
        fn probe_mean_within_range(flags in proptest::collection::vec(proptest::bool::ANY, 1..20)) {
            let set = ProbeSet {
                module_id: "m/a".into(),
                probes: (0..flags.len()).map(|i| probe(&i.to_string(), TaskKind::Verifiable, "ok")).collect(),
            };
            let answers = flags.iter().enumerate()
                .map(|(i, f)| (i.to_string(), if *f { "ok" } else { "no" }.to_string()))
                .collect();
            let (mean, per): (f64, Vec<(String, f64)>) = evaluate_probes(&answers, &set).unwrap();
            let lo = per.iter().map(|p| p.1).fold(1.0, f64::min);
            let hi = per.iter().map(|p| p.1).fold(0.0, f64::max);
            proptest::prop_assert!(lo <= mean && mean <= hi);
        }
    }
}
