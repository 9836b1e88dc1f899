use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{check_epochs, BackendError, StudentBackend, TrainingSummary};
use crate::adapter::SynthesisItem;
use crate::corpus::{SeedItem, Split};
use crate::knowledge::ModuleId;
use crate::util::unit_hash;

/// Canonical wrong answer emitted by the simulated student.
pub const INCORRECT_ANSWER: &str = "__incorrect__";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    #[default]
    Deterministic,
    Stochastic,
}

/// Mastery dynamics with planted prerequisites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedStudentState {
    pub mastery: BTreeMap<ModuleId, f64>,
    pub planted_prereqs: BTreeMap<ModuleId, BTreeSet<ModuleId>>,
    pub learning_rate: f64,
    pub readiness_floor: f64,
    pub rng_seed: u64,
    pub mode: SimMode,
    /// Answer round for deterministic mode. Training does not advance it.
    #[serde(default)]
    pub round: u64,
    /// Draw counter for stochastic mode.
    #[serde(default)]
    pub draws: u64,
}

impl SimulatedStudentState {
    pub fn new(mastery: BTreeMap<ModuleId, f64>, learning_rate: f64, rng_seed: u64) -> Self {
        Self {
            mastery,
            planted_prereqs: BTreeMap::new(),
            learning_rate,
            readiness_floor: 0.05,
            rng_seed,
            mode: SimMode::Deterministic,
            round: 0,
            draws: 0,
        }
    }

    pub fn mastery_of(&self, k: &str) -> Result<f64, BackendError> {
        self.mastery.get(k).copied().ok_or_else(|| BackendError::UnknownModule(k.to_string()))
    }

    /// `max(floor, min prerequisite mastery)`, or 1 without prerequisites.
    pub fn readiness(&self, k: &str) -> Result<f64, BackendError> {
        let prereqs = match self.planted_prereqs.get(k) {
            Some(p) if !p.is_empty() => p,
            _ => return Ok(1.0),
        };
        let weakest = prereqs
            .iter()
            .map(|p| self.mastery_of(p.as_str()))
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .fold(1.0, f64::min);
        Ok(weakest.max(self.readiness_floor))
    }
}

/// Applies `n_items` learning steps to one module.
pub fn sim_train(
    mut state: SimulatedStudentState,
    module: &str,
    n_items: usize,
) -> Result<SimulatedStudentState, BackendError> {
    let r = state.readiness(module)?;
    let mut m = state.mastery_of(module)?;
    let rate = state.learning_rate * r;
    for _ in 0..n_items {
        m += rate * (1.0 - m);
    }
    state.mastery.insert(ModuleId::from(module), m.clamp(0.0, 1.0));
    Ok(state)
}

/// The reference answer when the student "knows" the probe, otherwise the
/// canonical wrong token.
pub fn sim_answer(state: &mut SimulatedStudentState, probe: &SeedItem) -> Result<String, BackendError> {
    let mastery = state.mastery_of(probe.module_id.as_str())?;
    let seed = state.rng_seed.to_be_bytes();
    let u = match state.mode {
        SimMode::Deterministic => unit_hash(&[&seed, probe.id.as_bytes(), &state.round.to_be_bytes()]),
        SimMode::Stochastic => {
            state.draws += 1;
            unit_hash(&[&seed, probe.id.as_bytes(), &state.draws.to_be_bytes()])
        }
    };
    Ok(if u < mastery { probe.reference.clone() } else { INCORRECT_ANSWER.to_string() })
}

/// [`SimulatedStudentState`] behind the student contract. Prompts are mapped
/// back to seed items through an index built at construction.
#[derive(Debug, Clone)]
///
/// In deterministic mode each validation probe of a module gets a fixed slot
/// `(rank + 0.5) / n`, ranks ordered by a hash of the item id, and is answered
/// correctly iff its slot lies below the module's mastery. A module's probe
/// score is then its mastery quantized to the probe count.
pub struct SimulatedStudent {
    pub state: SimulatedStudentState,
    index: HashMap<String, (SeedItem, Option<f64>)>,
}

impl SimulatedStudent {
    pub fn new<'a>(state: SimulatedStudentState, seeds: impl IntoIterator<Item = &'a SeedItem>) -> Self {
        let seed = state.rng_seed.to_be_bytes();
        let mut index = HashMap::new();
        let mut probes: BTreeMap<ModuleId, Vec<(f64, &SeedItem)>> = BTreeMap::new();
        for s in seeds {
            if s.split == Some(Split::Validation) {
                let u = unit_hash(&[&seed, b"slot", s.id.as_bytes()]);
                probes.entry(s.module_id.clone()).or_default().push((u, s));
            } else {
                index.insert(s.prompt.clone(), (s.clone(), None));
            }
        }
        for (_, mut ps) in probes {
            ps.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.id.cmp(&b.1.id)));
            let n = ps.len() as f64;
            for (rank, (_, s)) in ps.into_iter().enumerate() {
                index.insert(s.prompt.clone(), (s.clone(), Some((rank as f64 + 0.5) / n)));
            }
        }
        Self { state, index }
    }
}

impl StudentBackend for SimulatedStudent {
    fn identity(&self) -> String {
        format!("simulated-student(seed={})", self.state.rng_seed)
    }

    fn answer(&mut self, prompt: &str) -> Result<String, BackendError> {
        match self.index.get(prompt) {
            Some((probe, Some(slot))) if self.state.mode == SimMode::Deterministic => {
                let known = *slot < self.state.mastery_of(probe.module_id.as_str())?;
                Ok(if known { probe.reference.clone() } else { INCORRECT_ANSWER.to_string() })
            }
            Some((probe, _)) => sim_answer(&mut self.state, probe),
            None => Ok(INCORRECT_ANSWER.to_string()),
        }
    }

    /// Each epoch applies one learning step per item, with readiness taken
    /// from the mastery at the start of the epoch.
    fn train(&mut self, items: &[SynthesisItem], max_epochs: usize) -> Result<TrainingSummary, BackendError> {
        check_epochs(max_epochs)?;
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for item in items {
            *counts.entry(item.module.as_str()).or_default() += 1;
        }
        for k in counts.keys() {
            self.state.mastery_of(k)?;
        }
        for _ in 0..max_epochs {
            let start = self.state.clone();
            for (k, n) in &counts {
                let r = start.readiness(k)?;
                let mut m = self.state.mastery_of(k)?;
                for _ in 0..*n {
                    m += start.learning_rate * r * (1.0 - m);
                }
                self.state.mastery.insert(ModuleId::from(*k), m.clamp(0.0, 1.0));
            }
        }
        Ok(TrainingSummary { epochs: max_epochs, items: items.len() * max_epochs })
    }

    fn checkpoint(&self) -> Result<Value, BackendError> {
        Ok(serde_json::to_value(&self.state).expect("state serializes"))
    }

    fn restore(&mut self, state: &Value) -> Result<(), BackendError> {
        self.state = serde_json::from_value(state.clone())
            .map_err(|e| BackendError::MalformedResponse(format!("student checkpoint: {e}")))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TaskKind;

    fn state(pairs: &[(&str, f64)], eta: f64) -> SimulatedStudentState {
        SimulatedStudentState::new(pairs.iter().map(|(k, m)| ((*k).into(), *m)).collect(), eta, 7)
    }

    #[test]
    fn recurrence_examples() {
        let s = sim_train(state(&[("m/a", 0.0)], 0.1), "m/a", 1).unwrap();
        assert!((s.mastery["m/a"] - 0.1).abs() < 1e-15);
        let s = sim_train(state(&[("m/a", 1.0)], 0.3), "m/a", 50).unwrap();
        assert_eq!(s.mastery["m/a"], 1.0);
        let mut blocked = state(&[("m/a", 0.0), ("m/b", 0.0)], 0.5);
        blocked.readiness_floor = 0.0;
        blocked.planted_prereqs.insert("m/b".into(), ["m/a".into()].into());
        assert_eq!(sim_train(blocked, "m/b", 10).unwrap().mastery["m/b"], 0.0);
        assert!(matches!(
            sim_train(state(&[], 0.1), "m/z", 1),
            Err(BackendError::UnknownModule(_))
        ));
    }

    fn probe(i: usize) -> SeedItem {
        SeedItem {
            id: format!("p{i}"),
            module_id: "m/a".into(),
            prompt: format!("q{i}"),
            reference: "yes".into(),
            task_kind: TaskKind::Verifiable,
            split: Some(Split::Validation),
        }
    }

    #[test]
    fn stochastic_score_tracks_mastery() {
        let mut s = state(&[("m/a", 0.6)], 0.1);
        s.mode = SimMode::Stochastic;
        let probes: Vec<SeedItem> = (0..400).map(probe).collect();
        let correct = probes
            .iter()
            .filter(|p| sim_answer(&mut s, p).unwrap() == "yes")
            .count();
        assert!((correct as f64 / 400.0 - 0.6).abs() <= 0.05);
    }

    #[test]
    fn deterministic_answers_are_stable() {
        let probes: Vec<SeedItem> = (0..50).map(probe).collect();
        let mut student = SimulatedStudent::new(state(&[("m/a", 0.5)], 0.1), &probes);
        let first: Vec<String> = probes.iter().map(|p| student.answer(&p.prompt).unwrap()).collect();
        let again: Vec<String> = probes.iter().map(|p| student.answer(&p.prompt).unwrap()).collect();
        assert_eq!(first, again);
        assert_eq!(first.iter().filter(|a| *a == "yes").count(), 25);
        let saved = student.checkpoint().unwrap();
        let item = SynthesisItem::from_seed(&probes[0], "S1");
        student.train(&vec![item; 5], 2).unwrap();
        assert!(student.state.mastery["m/a"] > 0.5);
        assert!(matches!(student.train(&[], 4), Err(BackendError::EpochLimit(4))));
        student.restore(&saved).unwrap();
        assert_eq!(student.state.mastery["m/a"], 0.5);
    }

    proptest::proptest! {
        #[test]
        fn mastery_stays_in_unit(m in 0.0..=1.0f64, eta in 0.01..=1.0f64, n in 0usize..40, split in 0usize..40) {
            let s = state(&[("m/a", m)], eta);
            let once = sim_train(s.clone(), "m/a", n + split).unwrap();
            let twice = sim_train(sim_train(s, "m/a", n).unwrap(), "m/a", split).unwrap();
            let (a, b) = (once.mastery["m/a"], twice.mastery["m/a"]);
            proptest::prop_assert!((0.0..=1.0).contains(&a) && a >= m);
            proptest::prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
