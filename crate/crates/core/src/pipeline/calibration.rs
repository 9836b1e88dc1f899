//! Training experiments that produce the trajectories dependency estimates
//! are read from.
//!
//! With a student that can checkpoint, calibration runs in episodes. Every
//! pending module is trained alone from the committed state until it crosses
//! the high ratio threshold. For the set X of modules that crossed, two kinds
//! of condition are built: A (all of X trained) and B_i (X without i). In each
//! condition every other deficient module gets a short exposure round and is
//! probed. Subject i's evidence is the two-snapshot trajectory [B_i, A], so a
//! contrast on j reflects what mastering i changes about learning j. A then
//! becomes the committed state for the next episode.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::Value;

use super::{PipelineError, RunConfig};
use crate::adapter::SynthesisItem;
use crate::backends::{BackendError, StudentBackend};
use crate::corpus::{SeedCorpus, Split};
use crate::evaluation::{evaluate_probes, PerformanceSnapshot, PerformanceTrajectory, ScoreReport};
use crate::identifier::Evidence;
use crate::knowledge::ModuleId;

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationOutcome {
    pub evidence: Vec<Evidence<f64>>,
    /// Modules that crossed in each episode.
    pub episodes: Vec<Vec<ModuleId>>,
    /// False when the student could not checkpoint and the plain sweep was used.
    pub interventional: bool,
    pub next_step: u64,
}

fn score(
    student: &mut dyn StudentBackend,
    corpus: &SeedCorpus,
    k: &ModuleId,
) -> Result<(f64, usize), PipelineError> {
    let set = corpus.probes_for(k.as_str())?;
    let mut answers = BTreeMap::new();
    for p in &set.probes {
        answers.insert(p.id.clone(), student.answer(&p.prompt)?);
    }
    let (s, _) = evaluate_probes(&answers, &set)?;
    Ok((s, set.probes.len()))
}

struct Ctx<'a> {
    corpus: &'a SeedCorpus,
    teacher: &'a ScoreReport<f64>,
    config: &'a RunConfig,
    items: BTreeMap<ModuleId, Vec<SynthesisItem>>,
    next_step: u64,
}

impl Ctx<'_> {
    fn ratio(&self, k: &ModuleId, s: f64) -> f64 {
        match self.teacher.score(k.as_str()) {
            Some(t) if t > 0.0 => s / t,
            _ => 0.0,
        }
    }

    fn train(&self, student: &mut dyn StudentBackend, k: &ModuleId, epochs: usize) -> Result<(), PipelineError> {
        let items = &self.items[k];
        let mut left = epochs;
        while left > 0 {
            let e = left.min(crate::backends::MAX_TRAIN_EPOCHS);
            student.train(items, e)?;
            left -= e;
        }
        Ok(())
    }

    /// Trains every crossed module except `skip` from `committed`, each for the
    /// epochs it needed to cross, and returns the resulting state.
    fn train_all_but(
        &self,
        student: &mut dyn StudentBackend,
        committed: &Value,
        crossed: &[(ModuleId, usize)],
        skip: Option<&ModuleId>,
    ) -> Result<Value, PipelineError> {
        student.restore(committed)?;
        for (x, epochs) in crossed {
            if Some(x) != skip {
                self.train(student, x, *epochs)?;
            }
        }
        Ok(student.checkpoint()?)
    }

    fn snapshot(&mut self, scores: &BTreeMap<ModuleId, (f64, usize)>) -> Result<PerformanceSnapshot<f64>, PipelineError> {
        let mut student = ScoreReport::new();
        for (k, (s, n)) in scores {
            student.insert(k.clone(), *s, *n)?;
        }
        let teacher = self.teacher.restricted(scores.keys());
        let step = self.next_step;
        self.next_step += 1;
        Ok(PerformanceSnapshot::new(step, student, teacher)?)
    }

    /// Scores each module in `modules` after a short exposure round from `state`.
    fn exposure(
        &self,
        student: &mut dyn StudentBackend,
        state: &Value,
        modules: impl Iterator<Item = ModuleId>,
    ) -> Result<BTreeMap<ModuleId, (f64, usize)>, PipelineError> {
        let mut out = BTreeMap::new();
        for j in modules {
            student.restore(state)?;
            if self.items.contains_key(&j) {
                self.train(student, &j, self.config.calibration_exposure_epochs)?;
            }
            out.insert(j.clone(), score(student, self.corpus, &j)?);
        }
        Ok(out)
    }
}

fn training_items(corpus: &SeedCorpus, k: &ModuleId, n: usize) -> Vec<SynthesisItem> {
    let seeds: Vec<_> = corpus.items_of(k.as_str(), Split::Train).collect();
    seeds.iter().cycle().take(if seeds.is_empty() { 0 } else { n }).map(|s| SynthesisItem::from_seed(s, "calibration")).collect()
}

/// Runs calibration over `order` (deficient modules, most severe first).
/// The student is returned to its starting state afterwards when possible.
pub fn calibrate(
    student: &mut dyn StudentBackend,
    corpus: &SeedCorpus,
    teacher: &ScoreReport<f64>,
    order: &[ModuleId],
    config: &RunConfig,
    first_step: u64,
) -> Result<CalibrationOutcome, PipelineError> {
    let start = match student.checkpoint() {
        Ok(v) => v,
        Err(BackendError::Unsupported(_)) => {
            log::warn!("student cannot checkpoint; falling back to a plain calibration sweep");
            return sweep_calibration(student, corpus, teacher, order, config, first_step);
        }
        Err(e) => return Err(e.into()),
    };
    let mut ctx = Ctx {
        corpus,
        teacher,
        config,
        items: order
            .iter()
            .map(|k| (k.clone(), training_items(corpus, k, config.calibration_items_per_epoch)))
            .filter(|(_, items)| !items.is_empty())
            .collect(),
        next_step: first_step,
    };
    let all: BTreeSet<ModuleId> = order.iter().cloned().collect();
    let mut committed = start.clone();
    let mut pending: Vec<ModuleId> = order.iter().filter(|k| ctx.items.contains_key(*k)).cloned().collect();
    let mut evidence = Vec::new();
    let mut episodes = Vec::new();
    while !pending.is_empty() {
        let mut crossed: Vec<(ModuleId, usize)> = Vec::new();
        for i in &pending {
            student.restore(&committed)?;
            for epoch in 1..=config.calibration_max_epochs {
                ctx.train(student, i, 1)?;
                let (s, _) = score(student, corpus, i)?;
                if ctx.ratio(i, s) >= config.tau_high {
                    crossed.push((i.clone(), epoch));
                    break;
                }
            }
        }
        if crossed.is_empty() {
            break;
        }
        let state_a = ctx.train_all_but(student, &committed, &crossed, None)?;
        let exposure_a = ctx.exposure(student, &state_a, all.iter().cloned())?;
        let mut subject_a = BTreeMap::new();
        student.restore(&state_a)?;
        for (x, _) in &crossed {
            subject_a.insert(x.clone(), score(student, corpus, x)?);
        }
        for (i, _) in &crossed {
            let state_b = ctx.train_all_but(student, &committed, &crossed, Some(i))?;
            student.restore(&state_b)?;
            let own_b = score(student, corpus, i)?;
            let mut before = ctx.exposure(student, &state_b, all.iter().filter(|j| *j != i).cloned())?;
            before.insert(i.clone(), own_b);
            let mut after: BTreeMap<ModuleId, (f64, usize)> =
                exposure_a.iter().filter(|(j, _)| *j != i).map(|(j, v)| (j.clone(), *v)).collect();
            after.insert(i.clone(), subject_a[i]);
            let mut trajectory = PerformanceTrajectory::new();
            trajectory.push(ctx.snapshot(&before)?)?;
            trajectory.push(ctx.snapshot(&after)?)?;
            evidence.push(Evidence { subject: Some(i.clone()), trajectory });
        }
        let names: Vec<ModuleId> = crossed.iter().map(|(k, _)| k.clone()).collect();
        log::info!("calibration episode {}: {} module(s) crossed", episodes.len() + 1, names.len());
        pending.retain(|k| !names.contains(k));
        episodes.push(names);
        committed = state_a;
    }
    student.restore(&start)?;
    Ok(CalibrationOutcome { evidence, episodes, interventional: true, next_step: ctx.next_step })
}

/// One short training round per module in `order`, with every module probed
/// before the sweep and after each round. Leaves the student trained.
pub fn sweep_calibration(
    student: &mut dyn StudentBackend,
    corpus: &SeedCorpus,
    teacher: &ScoreReport<f64>,
    order: &[ModuleId],
    config: &RunConfig,
    first_step: u64,
) -> Result<CalibrationOutcome, PipelineError> {
    let mut ctx = Ctx {
        corpus,
        teacher,
        config,
        items: order
            .iter()
            .map(|k| (k.clone(), training_items(corpus, k, config.calibration_items_per_epoch)))
            .collect(),
        next_step: first_step,
    };
    let probe_all = |student: &mut dyn StudentBackend| -> Result<BTreeMap<ModuleId, (f64, usize)>, PipelineError> {
        order.iter().map(|k| Ok((k.clone(), score(student, corpus, k)?))).collect()
    };
    let mut trajectory = PerformanceTrajectory::new();
    let initial = probe_all(student)?;
    trajectory.push(ctx.snapshot(&initial)?)?;
    for k in order {
        if !ctx.items[k].is_empty() {
            ctx.train(student, k, config.calibration_exposure_epochs)?;
        }
        let scores = probe_all(student)?;
        trajectory.push(ctx.snapshot(&scores)?)?;
    }
    Ok(CalibrationOutcome {
        evidence: vec![Evidence::whole(trajectory)],
        episodes: Vec::new(),
        interventional: false,
        next_step: ctx.next_step,
    })
}
