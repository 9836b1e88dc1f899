use std::collections::{BTreeMap, BTreeSet};

use serde_json::Value;

use super::state::{append_line, Event, EventLog, RejectedRecord, StateDir};
use super::{fan_out, PipelineError, RunConfig};
use crate::adapter::{extract_items, FilterReport, PromptBundle, Rejection};
use crate::backends::{StudentBackend, TeacherBackend, PROBE_SYSTEM_PROMPT};
use crate::corpus::SeedCorpus;
use crate::evaluation::{evaluate_probes, PerformanceSnapshot, PerformanceTrajectory, ScoreReport};
use crate::knowledge::{KnowledgeHierarchy, ModuleId};

/// Shared machinery of a run: backends, persisted logs and the step counter.
pub(crate) struct Engine<'a> {
    pub config: RunConfig,
    pub corpus: SeedCorpus,
    pub hierarchy: KnowledgeHierarchy,
    pub teacher: &'a dyn TeacherBackend,
    pub student: &'a mut dyn StudentBackend,
    pub dir: StateDir,
    pub log: EventLog,
    pub next_step: u64,
    /// Teacher scores from the initial probe, reused for every later snapshot.
    pub teacher_report: ScoreReport<f64>,
    pub trajectory: PerformanceTrajectory<f64>,
}

impl Engine<'_> {
    pub fn emit(&mut self, event: Event) -> Result<(), PipelineError> {
        self.log.emit(event)
    }

    /// Modules that are in the hierarchy and have at least one probe.
    pub fn probeable_modules(&self) -> BTreeSet<ModuleId> {
        let unprobeable = self.corpus.unprobeable_modules();
        self.hierarchy.ids().filter(|k| !unprobeable.contains(*k) && self.corpus.modules().contains(*k)).cloned().collect()
    }

    pub fn probe_teacher(&self, modules: &BTreeSet<ModuleId>) -> Result<ScoreReport<f64>, PipelineError> {
        let mut report = ScoreReport::new();
        for k in modules {
            let set = self.corpus.probes_for(k.as_str())?;
            let teacher = self.teacher;
            let answers = fan_out(&set.probes, self.config.teacher_parallelism, |p| {
                teacher.generate(PROBE_SYSTEM_PROMPT, &p.prompt).map(|a| (p.id.clone(), a))
            })
            .into_iter()
            .collect::<Result<BTreeMap<_, _>, _>>()?;
            let (score, _) = evaluate_probes(&answers, &set)?;
            report.insert(k.clone(), score, set.probes.len())?;
        }
        Ok(report)
    }

    pub fn probe_student(&mut self, modules: &BTreeSet<ModuleId>) -> Result<ScoreReport<f64>, PipelineError> {
        let mut report = ScoreReport::new();
        for k in modules {
            let set = self.corpus.probes_for(k.as_str())?;
            let mut answers = BTreeMap::new();
            for p in &set.probes {
                answers.insert(p.id.clone(), self.student.answer(&p.prompt)?);
            }
            let (score, _) = evaluate_probes(&answers, &set)?;
            report.insert(k.clone(), score, set.probes.len())?;
        }
        Ok(report)
    }

    pub fn allocate_step(&mut self) -> u64 {
        let s = self.next_step;
        self.next_step += 1;
        s
    }

    /// Probes the student on `modules`, records the snapshot and logs it.
    pub fn snapshot(&mut self, modules: &BTreeSet<ModuleId>, label: String) -> Result<PerformanceSnapshot<f64>, PipelineError> {
        let student = self.probe_student(modules)?;
        let teacher = self.teacher_report.restricted(modules);
        let step = self.allocate_step();
        let snap = PerformanceSnapshot::new(step, student, teacher)?;
        append_line(&self.dir.snapshots(), &snap.to_json_line())?;
        self.trajectory.push(snap.clone())?;
        self.emit(Event::Snapshot { step, label })?;
        Ok(snap)
    }

    /// Sends every prompt to the teacher (bounded parallel, joined in order)
    /// and flattens the responses into raw item records. Responses without a
    /// JSON payload become rejections.
    pub fn synthesize(&self, prompts: &[PromptBundle]) -> Result<(Vec<Value>, Vec<Rejection>), PipelineError> {
        let teacher = self.teacher;
        let responses = fan_out(prompts, self.config.teacher_parallelism, |p| teacher.generate(&p.system, &p.user));
        let mut items = Vec::new();
        let mut malformed = Vec::new();
        for response in responses {
            let text = response?;
            match extract_items(&text) {
                Ok(batch) => items.extend(batch),
                Err(reason) => malformed.push(Rejection { item_index: 0, reasons: vec![reason], item: Value::String(text) }),
            }
        }
        Ok((items, malformed))
    }

    /// Writes a batch's accepted and rejected items plus its prompts.
    pub fn persist_batch(
        &self,
        stage_index: usize,
        stage_id: &str,
        batch: &str,
        prompts: &[PromptBundle],
        report: &FilterReport,
    ) -> Result<(), PipelineError> {
        let dir = self.dir.stage_dir(stage_index, stage_id);
        std::fs::create_dir_all(&dir).map_err(|e| PipelineError::io(&dir, e))?;
        let lines = |xs: Vec<String>| -> String { xs.into_iter().map(|l| l + "\n").collect() };
        let accepted = lines(report.accepted.iter().map(|i| serde_json::to_string(i).expect("item serializes")).collect());
        let rejected = lines(
            report
                .rejected
                .iter()
                .map(|r| {
                    let rec = RejectedRecord { item_index: r.item_index, reasons: r.reasons.clone(), item: r.item.clone() };
                    serde_json::to_string(&rec).expect("record serializes")
                })
                .collect(),
        );
        let prompt_lines = lines(
            prompts
                .iter()
                .map(|p| {
                    serde_json::json!({
                        "fingerprint": crate::backends::fingerprint(&p.system, &p.user),
                        "kind": p.kind,
                        "user": p.user,
                    })
                    .to_string()
                })
                .collect(),
        );
        let write = |suffix: &str, body: &str| super::state::write_atomic(&dir.join(format!("{batch}.{suffix}")), body);
        write("accepted.jsonl", &accepted)?;
        write("rejected.jsonl", &rejected)?;
        write("prompts.jsonl", &prompt_lines)?;
        Ok(())
    }
}
