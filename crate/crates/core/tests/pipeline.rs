mod common;

use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use pedagogy_core::adapter::{validate_item, ValidateOptions};
use pedagogy_core::backends::{BackendError, SimulatedStudent, TeacherBackend};
use pedagogy_core::pipeline::{
    read_events, replay_gate_decisions, report, resume, run, Checkpoint, Event, Phase, PipelineError, RunConfig,
    RunOptions, RunReport, StageOutcome, StallPolicy, StateDir, StudentSelection,
};
use pedagogy_core::corpus::SeedCorpus;
use pedagogy_core::knowledge::KnowledgeHierarchy;

fn student_for(config: &RunConfig, corpus: &SeedCorpus) -> SimulatedStudent {
    let StudentSelection::Simulated(s) = &config.student else { panic!("simulated student expected") };
    s.build(corpus, config.rng_seed)
}

fn run_in(dir: &Path, config: RunConfig, h: KnowledgeHierarchy, corpus: SeedCorpus, options: RunOptions) -> Result<RunReport, PipelineError> {
    let teacher = config.teacher.build_local(&corpus).unwrap().unwrap();
    let mut student = student_for(&config, &corpus);
    run(config, corpus, h, &teacher, &mut student, dir, options)
}

fn text(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn chain3_runs_to_mastery_in_order() {
    let (config, h, corpus) = common::chain3(&[]);
    let dir = tempfile::tempdir().unwrap();
    let r = run_in(dir.path(), config, h, corpus, RunOptions::default()).unwrap();
    let order: Vec<_> = r.stages.iter().map(|s| s.report.modules.iter().cloned().collect::<Vec<_>>()).collect();
    assert_eq!(order, vec![vec![common::id("m/a")], vec![common::id("m/b")], vec![common::id("m/c")]]);
    assert!(r.final_min_ratio.unwrap() >= 0.9);
    assert_eq!(r.phase, Phase::Completed);
    assert!(replay_gate_decisions(dir.path()).unwrap().is_empty());
    assert_eq!(report(dir.path()).unwrap(), r);
    assert!(dir.path().join("report.json").exists());

    let events = read_events(&dir.path().join("events.jsonl")).unwrap();
    assert!(events.windows(2).all(|w| w[1].seq == w[0].seq + 1));
    assert!(matches!(events.last().unwrap().event, Event::RunCompleted { stages: 3 }));

    // Every accepted item still validates.
    for entry in fs::read_dir(dir.path().join("stages")).unwrap() {
        for f in fs::read_dir(entry.unwrap().path()).unwrap() {
            let p = f.unwrap().path();
            if p.to_string_lossy().ends_with(".accepted.jsonl") {
                for line in fs::read_to_string(&p).unwrap().lines() {
                    let v: serde_json::Value = serde_json::from_str(line).unwrap();
                    assert!(validate_item(&v, ValidateOptions::default()).is_ok(), "{line}");
                }
            }
        }
    }
}

#[test]
fn nothing_deficient_gives_empty_curriculum() {
    let (config, h, corpus) = common::chain3(&[("m/a", 1.0), ("m/b", 1.0), ("m/c", 1.0)]);
    let dir = tempfile::tempdir().unwrap();
    let r = run_in(dir.path(), config, h, corpus, RunOptions::default()).unwrap();
    assert!(r.stages.is_empty());
    assert_eq!(r.phase, Phase::Completed);
    assert!(text(dir.path(), "curriculum.json").contains("\"stages\": []"));
}

#[test]
fn second_run_in_same_dir_is_refused() {
    let (config, h, corpus) = common::chain3(&[("m/a", 1.0), ("m/b", 1.0), ("m/c", 1.0)]);
    let dir = tempfile::tempdir().unwrap();
    run_in(dir.path(), config.clone(), h.clone(), corpus.clone(), RunOptions::default()).unwrap();
    let err = run_in(dir.path(), config, h, corpus, RunOptions::default()).unwrap_err();
    assert!(matches!(err, PipelineError::AlreadyStarted(_)));
}

#[test]
fn halted_and_resumed_run_matches_uninterrupted() {
    let (config, h, corpus) = common::chain3(&[]);
    let full = tempfile::tempdir().unwrap();
    run_in(full.path(), config.clone(), h.clone(), corpus.clone(), RunOptions::default()).unwrap();

    let split = tempfile::tempdir().unwrap();
    let partial = run_in(split.path(), config.clone(), h, corpus.clone(), RunOptions { halt_after_stages: Some(1) }).unwrap();
    assert_eq!(partial.phase, Phase::StageRunning);
    assert_eq!(partial.stages.len(), 1);

    let teacher = config.teacher.build_local(&corpus).unwrap().unwrap();
    // A fresh student: resume must restore the checkpointed state itself.
    let mut student = student_for(&config, &corpus);
    resume(split.path(), &teacher, &mut student, RunOptions::default()).unwrap();
    for name in ["curriculum.json", "events.jsonl", "snapshots.jsonl", "graph.json", "report.json"] {
        assert_eq!(text(full.path(), name), text(split.path(), name), "{name}");
    }
}

/// Delegates to an inner teacher but fails every call once `budget` calls have been made.
struct Flaky<T> {
    inner: T,
    calls: AtomicUsize,
    budget: usize,
}

impl<T: TeacherBackend> TeacherBackend for Flaky<T> {
    fn identity(&self) -> String {
        self.inner.identity()
    }

    fn generate(&self, system: &str, user: &str) -> Result<String, BackendError> {
        if self.calls.fetch_add(1, Ordering::SeqCst) >= self.budget {
            return Err(BackendError::Timeout);
        }
        self.inner.generate(system, user)
    }
}

#[test]
fn backend_failure_leaves_resumable_checkpoint() {
    let (config, h, corpus) = common::chain3(&[]);
    let full = tempfile::tempdir().unwrap();
    run_in(full.path(), config.clone(), h.clone(), corpus.clone(), RunOptions::default()).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let inner = config.teacher.build_local(&corpus).unwrap().unwrap();
    // Probes take 30 calls; each stage makes 40 stage prompts.
    let flaky = Flaky { inner, calls: AtomicUsize::new(0), budget: 30 + 40 + 5 };
    let mut student = student_for(&config, &corpus);
    let err = run(config.clone(), corpus.clone(), h, &flaky, &mut student, dir.path(), RunOptions::default()).unwrap_err();
    assert!(matches!(err, PipelineError::Backend(BackendError::Timeout)));
    assert_eq!(err.exit_code(), 3);
    let cp = Checkpoint::load(&StateDir::new(dir.path())).unwrap();
    assert_eq!(cp.phase, Phase::Aborted);
    assert_eq!(cp.resume_phase, Some(Phase::StageRunning));
    assert_eq!(cp.current_stage_index, 1);

    let teacher = config.teacher.build_local(&corpus).unwrap().unwrap();
    let mut student = student_for(&config, &corpus);
    let r = resume(dir.path(), &teacher, &mut student, RunOptions::default()).unwrap();
    assert_eq!(r.phase, Phase::Completed);
    for name in ["curriculum.json", "events.jsonl", "snapshots.jsonl"] {
        assert_eq!(text(full.path(), name), text(dir.path(), name), "{name}");
    }
}

#[test]
fn stall_policies() {
    let (mut config, h, corpus) = common::chain3(&[]);
    config.tau_mastery = 1.0;
    config.max_remedial_rounds = 1;
    if let StudentSelection::Simulated(s) = &mut config.student {
        s.learning_rate = 0.001;
    }

    let dir = tempfile::tempdir().unwrap();
    let r = run_in(dir.path(), config.clone(), h.clone(), corpus.clone(), RunOptions::default()).unwrap();
    assert!(r.stages.iter().all(|s| s.report.outcome == StageOutcome::ProceededWithWarning && s.report.remedial_rounds == 1));
    assert!(replay_gate_decisions(dir.path()).unwrap().is_empty());

    config.stall_policy = StallPolicy::Abort;
    let dir = tempfile::tempdir().unwrap();
    let err = run_in(dir.path(), config, h, corpus, RunOptions::default()).unwrap_err();
    assert!(matches!(err, PipelineError::MasteryStall { rounds: 1, .. }));
    assert_eq!(err.exit_code(), 4);
    let events = read_events(&dir.path().join("events.jsonl")).unwrap();
    assert!(events.iter().any(|e| matches!(e.event, Event::MasteryStall { abort: true, .. })));
    assert!(matches!(events.last().unwrap().event, Event::RunAborted { .. }));
}

#[test]
fn resume_rejects_missing_or_corrupt_checkpoint() {
    let (config, _, corpus) = common::chain3(&[]);
    let teacher = config.teacher.build_local(&corpus).unwrap().unwrap();
    let mut student = student_for(&config, &corpus);
    let dir = tempfile::tempdir().unwrap();
    let err = resume(dir.path(), &teacher, &mut student, RunOptions::default()).unwrap_err();
    assert!(matches!(err, PipelineError::CorruptCheckpoint(_)));
    fs::write(dir.path().join("checkpoint.json"), "{not json").unwrap();
    let err = resume(dir.path(), &teacher, &mut student, RunOptions::default()).unwrap_err();
    assert!(matches!(err, PipelineError::CorruptCheckpoint(_)));
}
