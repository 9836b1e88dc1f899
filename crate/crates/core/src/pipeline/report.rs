use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::run::read_plan;
use super::state::{read_events, Checkpoint, Event, Phase, StageReport, StateDir};
use super::{PipelineError, RunConfig};
use crate::adapter::SynthesisItem;
use crate::evaluation::PerformanceTrajectory;
use crate::knowledge::ModuleId;
use crate::organizer::mastery_gate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    #[serde(flatten)]
    pub report: StageReport,
    pub acceptance_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub phase: Phase,
    pub stages: Vec<StageSummary>,
    /// Student/teacher ratio per curriculum module in the latest snapshot.
    pub final_ratios: BTreeMap<ModuleId, f64>,
    pub final_min_ratio: Option<f64>,
    pub remedial_rounds: usize,
    pub accepted_items: usize,
    /// Share of accepted items per category, over every stage batch.
    pub category_shares: BTreeMap<String, f64>,
}

fn accepted_items(dir: &StateDir) -> Result<Vec<SynthesisItem>, PipelineError> {
    let stages = dir.path("stages");
    let mut files = Vec::new();
    if stages.exists() {
        for entry in fs::read_dir(&stages).map_err(|e| PipelineError::io(&stages, e))? {
            let stage = entry.map_err(|e| PipelineError::io(&stages, e))?.path();
            for f in fs::read_dir(&stage).map_err(|e| PipelineError::io(&stage, e))? {
                let p = f.map_err(|e| PipelineError::io(&stage, e))?.path();
                if p.to_string_lossy().ends_with(".accepted.jsonl") {
                    files.push(p);
                }
            }
        }
    }
    files.sort();
    let mut items = Vec::new();
    for p in files {
        for line in dir.read(&p)?.lines().filter(|l| !l.trim().is_empty()) {
            items.push(
                serde_json::from_str(line).map_err(|e| PipelineError::CorruptState(format!("{}: {e}", p.display())))?,
            );
        }
    }
    Ok(items)
}

fn trajectory(dir: &StateDir) -> Result<PerformanceTrajectory<f64>, PipelineError> {
    if !dir.snapshots().exists() {
        return Ok(PerformanceTrajectory::new());
    }
    Ok(PerformanceTrajectory::from_jsonl(&dir.read(&dir.snapshots())?)?)
}

/// Read-only summary of the run in `root`.
pub fn report(root: &Path) -> Result<RunReport, PipelineError> {
    let dir = StateDir::new(root);
    let cp = Checkpoint::load(&dir)?;
    let stages: Vec<StageSummary> = cp
        .stage_reports
        .iter()
        .map(|r| StageSummary { acceptance_rate: r.acceptance_rate(), report: r.clone() })
        .collect();

    let trajectory = trajectory(&dir)?;
    let curriculum_modules: Vec<ModuleId> = if dir.curriculum().exists() {
        read_plan(&dir)?.curriculum.modules().cloned().collect()
    } else {
        Vec::new()
    };
    let mut final_ratios = BTreeMap::new();
    if let Some(last) = trajectory.last() {
        let modules: Vec<ModuleId> = if curriculum_modules.is_empty() {
            last.student.scores.keys().cloned().collect()
        } else {
            curriculum_modules
        };
        for k in modules {
            if let Some(r) = last.ratio(k.as_str()) {
                final_ratios.insert(k, r);
            }
        }
    }
    let final_min_ratio = final_ratios.values().copied().reduce(f64::min);

    let items = accepted_items(&dir)?;
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for item in &items {
        *counts.entry(item.module.category().to_string()).or_default() += 1;
    }
    let category_shares = counts.into_iter().map(|(c, n)| (c, n as f64 / items.len() as f64)).collect();

    Ok(RunReport {
        phase: cp.phase,
        remedial_rounds: stages.iter().map(|s| s.report.remedial_rounds).sum(),
        stages,
        final_ratios,
        final_min_ratio,
        accepted_items: items.len(),
        category_shares,
    })
}

/// A logged gate decision that differs from its recomputation.
#[derive(Debug, Clone, PartialEq)]
pub struct GateMismatch {
    pub seq: u64,
    pub stage_id: String,
    pub step: u64,
    pub detail: String,
}

/// Recomputes every logged gate decision from the persisted snapshots and
/// curriculum and returns the ones that disagree.
pub fn replay_gate_decisions(root: &Path) -> Result<Vec<GateMismatch>, PipelineError> {
    let dir = StateDir::new(root);
    let config = RunConfig::from_toml(&dir.read(&dir.config())?)?;
    let curriculum = read_plan(&dir)?.curriculum;
    let trajectory = trajectory(&dir)?;
    let by_step: BTreeMap<u64, _> = trajectory.snapshots().iter().map(|s| (s.step, s)).collect();
    let mut out = Vec::new();
    for record in read_events(&dir.events())? {
        let Event::GateDecision { stage_id, step, advance, min_ratio, failing, .. } = record.event else { continue };
        let mismatch = |detail: String| GateMismatch { seq: record.seq, stage_id: stage_id.clone(), step, detail };
        let Some(stage) = curriculum.stages.iter().find(|s| s.stage_id == stage_id) else {
            out.push(mismatch("stage not in curriculum".into()));
            continue;
        };
        let Some(snap) = by_step.get(&step) else {
            out.push(mismatch("snapshot missing".into()));
            continue;
        };
        let d = mastery_gate(&snap.student, &snap.teacher, &stage.modules, config.tau_mastery)?;
        let recomputed: Vec<ModuleId> = d.failing_modules.iter().cloned().collect();
        if d.advance != advance || d.min_ratio != min_ratio || recomputed != failing {
            out.push(mismatch(format!(
                "logged advance={advance} min_ratio={min_ratio} failing={failing:?}; recomputed advance={} min_ratio={} failing={recomputed:?}",
                d.advance, d.min_ratio
            )));
        }
    }
    Ok(out)
}
