//! End-to-end orchestration with persisted, resumable run state.

mod calibration;
mod config;
mod engine;
mod report;
mod run;
mod state;

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use thiserror::Error;

use crate::adapter::AdapterError;
use crate::backends::BackendError;
use crate::corpus::CorpusError;
use crate::evaluation::EvaluationError;
use crate::identifier::IdentifierError;
use crate::knowledge::KnowledgeError;
use crate::organizer::OrganizerError;

pub use calibration::{calibrate, sweep_calibration, CalibrationOutcome};
pub use config::{
    HttpSettings, RunConfig, SimulatedStudentSettings, SnapshotCadence, StallPolicy, StudentSelection,
    TeacherSelection,
};
pub use report::{replay_gate_decisions, report, GateMismatch, RunReport, StageSummary};
pub use run::{diagnose, load_plan, plan, resume, run, DiagnosisOutcome, PlanOutcome, RunOptions};
pub use state::{
    read_events, Checkpoint, Event, EventRecord, Phase, RejectedRecord, StageOutcome, StageReport, StateDir,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
    #[error(transparent)]
    Evaluation(#[from] EvaluationError),
    #[error(transparent)]
    Identifier(#[from] IdentifierError),
    #[error(transparent)]
    Organizer(#[from] OrganizerError),
    #[error(transparent)]
    Adapter(#[from] AdapterError),
    #[error("backend failure: {0}")]
    Backend(#[from] BackendError),
    #[error("stage {stage_id} did not reach mastery after {rounds} remedial rounds")]
    MasteryStall { stage_id: String, rounds: usize },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("corrupt run state: {0}")]
    CorruptState(String),
    #[error("state directory {0} already holds a run; use resume")]
    AlreadyStarted(String),
}

impl PipelineError {
    pub(crate) fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Self::Io { path: path.display().to_string(), message: e.to_string() }
    }

    /// Short machine-readable kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Config(_) => "config",
            Self::Io { .. } => "io",
            Self::Corpus(_) => "corpus",
            Self::Knowledge(_) => "knowledge",
            Self::Evaluation(_) => "evaluation",
            Self::Identifier(_) => "identifier",
            Self::Organizer(_) => "organizer",
            Self::Adapter(_) => "adapter",
            Self::Backend(_) => "backend_failure",
            Self::MasteryStall { .. } => "mastery_stall",
            Self::CorruptCheckpoint(_) => "corrupt_checkpoint",
            Self::CorruptState(_) => "corrupt_state",
            Self::AlreadyStarted(_) => "already_started",
        }
    }

    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Backend(_) => 3,
            Self::MasteryStall { .. } => 4,
            _ => 1,
        }
    }
}

/// Maps `f` over `inputs` with at most `parallelism` calls in flight and
/// returns results in input order.
pub fn fan_out<T: Sync, R: Send>(inputs: &[T], parallelism: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    if inputs.is_empty() {
        return Vec::new();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..inputs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..parallelism.clamp(1, inputs.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(input) = inputs.get(i) else { break };
                let r = f(input);
                slots.lock().expect("fan-out lock")[i] = Some(r);
            });
        }
    });
    slots.into_inner().expect("fan-out lock").into_iter().map(|r| r.expect("every slot filled")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fan_out_keeps_order_and_bound() {
        let live = AtomicUsize::new(0);
        let peak = AtomicUsize::new(0);
        let inputs: Vec<usize> = (0..40).collect();
        let out = fan_out(&inputs, 3, |x| {
            let now = live.fetch_add(1, Ordering::SeqCst) + 1;
            peak.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(std::time::Duration::from_millis(2));
            live.fetch_sub(1, Ordering::SeqCst);
            x * 2
        });
        assert_eq!(out, inputs.iter().map(|x| x * 2).collect::<Vec<_>>());
        assert!(peak.load(Ordering::SeqCst) <= 3);
    }
}
