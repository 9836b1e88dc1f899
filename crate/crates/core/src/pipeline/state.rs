use std::collections::BTreeSet;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::PipelineError;
use crate::adapter::Reason;
use crate::knowledge::ModuleId;

pub const CHECKPOINT_VERSION: u32 = 1;

/// File layout of a run-state directory.
#[derive(Debug, Clone)]
pub struct StateDir {
    pub root: PathBuf,
}

impl StateDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn config(&self) -> PathBuf {
        self.path("config.toml")
    }
    pub fn hierarchy(&self) -> PathBuf {
        self.path("hierarchy.json")
    }
    pub fn corpus(&self) -> PathBuf {
        self.path("corpus.json")
    }
    pub fn gaps(&self) -> PathBuf {
        self.path("gaps.json")
    }
    pub fn graph(&self) -> PathBuf {
        self.path("graph.json")
    }
    pub fn ranking(&self) -> PathBuf {
        self.path("ranking.json")
    }
    pub fn targets(&self) -> PathBuf {
        self.path("targets.json")
    }
    pub fn curriculum(&self) -> PathBuf {
        self.path("curriculum.json")
    }
    pub fn snapshots(&self) -> PathBuf {
        self.path("snapshots.jsonl")
    }
    pub fn calibration(&self) -> PathBuf {
        self.path("calibration.jsonl")
    }
    pub fn events(&self) -> PathBuf {
        self.path("events.jsonl")
    }
    pub fn checkpoint(&self) -> PathBuf {
        self.path("checkpoint.json")
    }
    pub fn report(&self) -> PathBuf {
        self.path("report.json")
    }
    pub fn stage_dir(&self, index: usize, stage_id: &str) -> PathBuf {
        self.root.join("stages").join(format!("{:02}-{stage_id}", index + 1))
    }

    pub fn read(&self, path: &Path) -> Result<String, PipelineError> {
        fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))
    }
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| PipelineError::io(parent, e))?;
    }
    let tmp = path.with_extension("tmp");
    let mut f = File::create(&tmp).map_err(|e| PipelineError::io(&tmp, e))?;
    f.write_all(contents.as_bytes()).map_err(|e| PipelineError::io(&tmp, e))?;
    f.sync_all().map_err(|e| PipelineError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| PipelineError::io(path, e))
}

pub fn append_line(path: &Path, line: &str) -> Result<(), PipelineError> {
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(|e| PipelineError::io(path, e))?;
    writeln!(f, "{line}").map_err(|e| PipelineError::io(path, e))
}

/// Keeps only the lines for which `keep` holds.
pub fn truncate_lines(path: &Path, keep: impl Fn(&str) -> bool) -> Result<(), PipelineError> {
    if !path.exists() {
        return Ok(());
    }
    let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    let kept: String = text.lines().filter(|l| !l.trim().is_empty() && keep(l)).map(|l| format!("{l}\n")).collect();
    write_atomic(path, &kept)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Diagnosed,
    Planned,
    StageRunning,
    Completed,
    Aborted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageOutcome {
    Passed,
    ProceededWithWarning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    RunStarted { teacher: String, student: String, rng_seed: u64 },
    Snapshot { step: u64, label: String },
    Diagnosed { deficient: Vec<ModuleId>, excluded: Vec<ModuleId> },
    CalibrationEpisode { episode: usize, crossed: Vec<ModuleId> },
    GraphBuilt { edges: usize, source: String },
    TargetsSelected { targets: Vec<ModuleId> },
    CurriculumPlanned { stages: Vec<String> },
    StageStarted { stage_index: usize, stage_id: String },
    BatchFiltered { stage_id: String, batch: String, accepted: usize, rejected: usize },
    Trained { stage_id: String, batch: String, epochs: usize, items: usize },
    GateDecision {
        stage_id: String,
        step: u64,
        round: usize,
        advance: bool,
        min_ratio: f64,
        failing: Vec<ModuleId>,
    },
    RemedialRound { stage_id: String, round: usize, weak: Vec<ModuleId> },
    MasteryStall { stage_id: String, abort: bool },
    StageFinished { stage_id: String, outcome: StageOutcome },
    RunCompleted { stages: usize },
    RunAborted { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    #[serde(flatten)]
    pub event: Event,
}

/// Append-only event log with consecutive sequence numbers.
#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
    next_seq: u64,
}

impl EventLog {
    pub fn open(path: PathBuf, next_seq: u64) -> Self {
        Self { path, next_seq }
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    pub fn emit(&mut self, event: Event) -> Result<(), PipelineError> {
        let record = EventRecord { seq: self.next_seq, event };
        append_line(&self.path, &serde_json::to_string(&record).expect("event serializes"))?;
        self.next_seq += 1;
        Ok(())
    }
}

pub fn read_events(path: &Path) -> Result<Vec<EventRecord>, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| PipelineError::CorruptState(format!("event line {}: {e}", i + 1)))
        })
        .collect()
}

/// Per-batch record of a rejected item, as written to `*.rejected.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedRecord {
    pub item_index: usize,
    pub reasons: Vec<Reason>,
    pub item: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage_id: String,
    pub modules: BTreeSet<ModuleId>,
    pub outcome: StageOutcome,
    /// Epochs of stage data trained before the gate passed or the budget ran out.
    pub epochs: usize,
    pub remedial_rounds: usize,
    pub min_ratio: f64,
    pub accepted: usize,
    pub rejected: usize,
    pub bridging_accepted: usize,
}

impl StageReport {
    pub fn acceptance_rate(&self) -> f64 {
        let total = self.accepted + self.rejected;
        if total == 0 {
            0.0
        } else {
            self.accepted as f64 / total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub phase: Phase,
    /// Index of the next stage to train.
    pub current_stage_index: usize,
    pub next_seq: u64,
    pub next_step: u64,
    /// Student state as of this checkpoint, when the backend can export it.
    pub student: Option<Value>,
    pub stage_reports: Vec<StageReport>,
    #[serde(default)]
    pub abort_reason: Option<String>,
    /// For an aborted run, the last milestone reached before the abort.
    #[serde(default)]
    pub resume_phase: Option<Phase>,
}

impl Checkpoint {
    /// Last milestone the run completed; `None` if it never finished diagnosis.
    pub fn progress(&self) -> Option<Phase> {
        if self.phase == Phase::Aborted {
            self.resume_phase
        } else {
            Some(self.phase)
        }
    }

    pub fn load(dir: &StateDir) -> Result<Self, PipelineError> {
        let path = dir.checkpoint();
        if !path.exists() {
            return Err(PipelineError::CorruptCheckpoint(format!("no checkpoint at {}", path.display())));
        }
        let text = dir.read(&path)?;
        let cp: Self = serde_json::from_str(&text).map_err(|e| PipelineError::CorruptCheckpoint(e.to_string()))?;
        if cp.version != CHECKPOINT_VERSION {
            return Err(PipelineError::CorruptCheckpoint(format!("unsupported checkpoint version {}", cp.version)));
        }
        Ok(cp)
    }

    pub fn save(&self, dir: &StateDir) -> Result<(), PipelineError> {
        write_atomic(&dir.checkpoint(), &serde_json::to_string_pretty(self).expect("checkpoint serializes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn event_lines_are_flat() {
        let r = EventRecord { seq: 3, event: Event::RunCompleted { stages: 2 } };
        let line = serde_json::to_string(&r).unwrap();
        assert_eq!(line, r#"{"seq":3,"kind":"run_completed","stages":2}"#);
        assert_eq!(serde_json::from_str::<EventRecord>(&line).unwrap(), r);
    }

    #[test]
    fn atomic_write_and_truncate() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a/b.txt");
        write_atomic(&p, "1\n2\n3\n").unwrap();
        truncate_lines(&p, |l| l != "2").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "1\n3\n");
        assert!(!p.with_extension("tmp").exists());
    }
}
