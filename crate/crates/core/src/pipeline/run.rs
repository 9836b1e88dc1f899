use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde_json::{json, Value};

use super::calibration::calibrate;
use super::engine::Engine;
use super::report::{report, RunReport};
use super::state::{
    append_line, truncate_lines, write_atomic, Checkpoint, Event, EventLog, EventRecord, Phase, StageOutcome,
    StageReport, StateDir, CHECKPOINT_VERSION,
};
use super::{PipelineError, RunConfig, StallPolicy};
use crate::adapter::{
    filter_batch, recorded_prerequisites, render_bridging_prompt, render_remedial_prompt, render_stage_prompt,
    FilterContext, FilterReport, PromptBundle, StageContext, StructuralVerifier, SynthesisItem, ValidateOptions,
};
use crate::backends::{BackendError, StudentBackend, TeacherBackend};
use crate::corpus::{SeedCorpus, Split};
use crate::evaluation::{PerformanceSnapshot, PerformanceTrajectory, ScoreReport};
use crate::identifier::{build_graph, deficient_modules, rank_severity, select_targets, GapReport, SeverityRanking, TargetSet};
use crate::knowledge::{DependencyGraph, KnowledgeHierarchy, ModuleId};
use crate::organizer::{build_curriculum, enforce_zpd, mastery_gate, Curriculum, MasteryDecision, Stage, ZpdFlag};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Stop, resumably, once this many stages have finished.
    pub halt_after_stages: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosisOutcome {
    pub initial: PerformanceSnapshot<f64>,
    pub gaps: GapReport<f64>,
    pub deficient: BTreeSet<ModuleId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutcome {
    pub graph: DependencyGraph<f64>,
    pub ranking: SeverityRanking<f64>,
    pub targets: TargetSet<f64>,
    pub curriculum: Curriculum<f64>,
}

/// Starts a run in `dir` and stops after diagnosis.
pub fn diagnose(
    config: RunConfig,
    corpus: SeedCorpus,
    hierarchy: KnowledgeHierarchy,
    teacher: &dyn TeacherBackend,
    student: &mut dyn StudentBackend,
    dir: &Path,
) -> Result<DiagnosisOutcome, PipelineError> {
    let mut eng = fresh(config, corpus, hierarchy, teacher, student, dir)?;
    let start = blank_checkpoint(&eng);
    drive(&mut eng, start, Phase::Diagnosed, RunOptions::default())?;
    load_diagnosis(&eng)
}

/// Continues a diagnosed run in `dir` through calibration and planning.
pub fn plan(dir: &Path, teacher: &dyn TeacherBackend, student: &mut dyn StudentBackend) -> Result<PlanOutcome, PipelineError> {
    let (mut eng, cp) = reopen(dir, teacher, student)?;
    drive(&mut eng, cp, Phase::Planned, RunOptions::default())?;
    read_plan(&eng.dir)
}

/// Full run from a fresh state directory.
pub fn run(
    config: RunConfig,
    corpus: SeedCorpus,
    hierarchy: KnowledgeHierarchy,
    teacher: &dyn TeacherBackend,
    student: &mut dyn StudentBackend,
    dir: &Path,
    options: RunOptions,
) -> Result<RunReport, PipelineError> {
    let mut eng = fresh(config, corpus, hierarchy, teacher, student, dir)?;
    let start = blank_checkpoint(&eng);
    finish(&mut eng, start, options)
}

/// Continues the run in `dir` from its last checkpoint.
pub fn resume(
    dir: &Path,
    teacher: &dyn TeacherBackend,
    student: &mut dyn StudentBackend,
    options: RunOptions,
) -> Result<RunReport, PipelineError> {
    let (mut eng, cp) = reopen(dir, teacher, student)?;
    finish(&mut eng, cp, options)
}

fn finish(eng: &mut Engine<'_>, start: Checkpoint, options: RunOptions) -> Result<RunReport, PipelineError> {
    let cp = drive(eng, start, Phase::Completed, options)?;
    let summary = report(&eng.dir.root)?;
    if cp.phase == Phase::Completed {
        write_atomic(&eng.dir.report(), &pretty(&summary))?;
    }
    Ok(summary)
}

fn fresh<'a>(
    config: RunConfig,
    corpus: SeedCorpus,
    hierarchy: KnowledgeHierarchy,
    teacher: &'a dyn TeacherBackend,
    student: &'a mut dyn StudentBackend,
    dir: &Path,
) -> Result<Engine<'a>, PipelineError> {
    config.validate()?;
    let dir = StateDir::new(dir);
    if dir.checkpoint().exists() {
        return Err(PipelineError::AlreadyStarted(dir.root.display().to_string()));
    }
    fs::create_dir_all(&dir.root).map_err(|e| PipelineError::io(&dir.root, e))?;
    for stale in [
        dir.events(),
        dir.snapshots(),
        dir.calibration(),
        dir.gaps(),
        dir.graph(),
        dir.ranking(),
        dir.targets(),
        dir.curriculum(),
        dir.report(),
    ] {
        if stale.exists() {
            fs::remove_file(&stale).map_err(|e| PipelineError::io(&stale, e))?;
        }
    }
    let stages = dir.path("stages");
    if stages.exists() {
        fs::remove_dir_all(&stages).map_err(|e| PipelineError::io(&stages, e))?;
    }
    let corpus = if corpus.is_split() { corpus } else { corpus.split(config.rng_seed) };
    write_atomic(&dir.config(), &config.to_toml())?;
    write_atomic(&dir.hierarchy(), &hierarchy.to_json())?;
    write_atomic(&dir.corpus(), &pretty(&corpus))?;
    let log = EventLog::open(dir.events(), 0);
    Ok(Engine {
        config,
        corpus,
        hierarchy,
        teacher,
        student,
        dir,
        log,
        next_step: 0,
        teacher_report: ScoreReport::new(),
        trajectory: PerformanceTrajectory::new(),
    })
}

fn reopen<'a>(
    root: &Path,
    teacher: &'a dyn TeacherBackend,
    student: &'a mut dyn StudentBackend,
) -> Result<(Engine<'a>, Checkpoint), PipelineError> {
    let dir = StateDir::new(root);
    let cp = Checkpoint::load(&dir)?;
    let config = RunConfig::from_toml(&dir.read(&dir.config())?)?;
    let hierarchy = KnowledgeHierarchy::from_json(&dir.read(&dir.hierarchy())?, "")?;
    let corpus: SeedCorpus = serde_json::from_str(&dir.read(&dir.corpus())?)
        .map_err(|e| PipelineError::CorruptState(format!("corpus.json: {e}")))?;

    // Drop whatever was logged after the checkpoint; that work is redone.
    truncate_lines(&dir.events(), |l| serde_json::from_str::<EventRecord>(l).is_ok_and(|r| r.seq < cp.next_seq))?;
    let step_before = |l: &str, field: Option<&str>| {
        let v: Value = serde_json::from_str(l).unwrap_or(Value::Null);
        let v = field.map_or(&v, |f| &v[f]);
        v["step"].as_u64().is_some_and(|s| s < cp.next_step)
    };
    truncate_lines(&dir.snapshots(), |l| step_before(l, None))?;
    truncate_lines(&dir.calibration(), |l| step_before(l, Some("snapshot")))?;

    match &cp.student {
        Some(state) => student.restore(state)?,
        None => log::warn!("checkpoint holds no student state; continuing with the backend as it is"),
    }
    let trajectory = if dir.snapshots().exists() {
        PerformanceTrajectory::from_jsonl(&dir.read(&dir.snapshots())?)?
    } else {
        PerformanceTrajectory::new()
    };
    let teacher_report = trajectory.snapshots().first().map(|s| s.teacher.clone()).unwrap_or_default();
    let log = EventLog::open(dir.events(), cp.next_seq);
    let eng = Engine {
        config,
        corpus,
        hierarchy,
        teacher,
        student,
        dir,
        log,
        next_step: cp.next_step,
        teacher_report,
        trajectory,
    };
    Ok((eng, cp))
}

/// In-memory checkpoint for a run that has not reached any milestone yet.
fn blank_checkpoint(eng: &Engine<'_>) -> Checkpoint {
    checkpoint(eng, Phase::Aborted, 0, Vec::new())
}

fn checkpoint(eng: &Engine<'_>, phase: Phase, index: usize, reports: Vec<StageReport>) -> Checkpoint {
    let student = match eng.student.checkpoint() {
        Ok(v) => Some(v),
        Err(BackendError::Unsupported(_)) => None,
        Err(e) => {
            log::warn!("could not capture student state: {e}");
            None
        }
    };
    Checkpoint {
        version: CHECKPOINT_VERSION,
        phase,
        current_stage_index: index,
        next_seq: eng.log.next_seq(),
        next_step: eng.next_step,
        student,
        stage_reports: reports,
        abort_reason: None,
        resume_phase: None,
    }
}

/// Advances milestone by milestone until `until` is reached, saving a
/// checkpoint after each. A failure leaves an aborted, resumable checkpoint.
fn drive(eng: &mut Engine<'_>, mut cp: Checkpoint, until: Phase, options: RunOptions) -> Result<Checkpoint, PipelineError> {
    loop {
        let progress = cp.progress();
        if progress >= Some(until) {
            return Ok(cp);
        }
        let step = match progress {
            None => diagnose_step(eng),
            Some(Phase::Diagnosed) => plan_step(eng),
            Some(Phase::Planned | Phase::StageRunning) => stage_step(eng, &cp),
            Some(Phase::Completed) => return Ok(cp),
            Some(Phase::Aborted) => Err(PipelineError::CorruptCheckpoint("aborted checkpoint has no resume phase".into())),
        };
        match step {
            Ok(next) => {
                next.save(&eng.dir)?;
                cp = next;
            }
            Err(e) => {
                abort(eng, &cp, &e);
                return Err(e);
            }
        }
        if let Some(n) = options.halt_after_stages {
            if cp.phase == Phase::StageRunning && cp.stage_reports.len() >= n {
                log::info!("halting after {} stage(s)", cp.stage_reports.len());
                return Ok(cp);
            }
        }
    }
}

fn abort(eng: &mut Engine<'_>, last: &Checkpoint, err: &PipelineError) {
    let reason = err.to_string();
    log::error!("run aborted: {reason}");
    if let Err(e) = eng.emit(Event::RunAborted { reason: reason.clone() }) {
        log::error!("could not log the abort: {e}");
    }
    let cp = Checkpoint {
        phase: Phase::Aborted,
        resume_phase: last.progress(),
        abort_reason: Some(reason),
        ..last.clone()
    };
    if let Err(e) = cp.save(&eng.dir) {
        log::error!("could not save the abort checkpoint: {e}");
    }
}

fn diagnose_step(eng: &mut Engine<'_>) -> Result<Checkpoint, PipelineError> {
    eng.emit(Event::RunStarted {
        teacher: eng.teacher.identity(),
        student: eng.student.identity(),
        rng_seed: eng.config.rng_seed,
    })?;
    let modules = eng.probeable_modules();
    if modules.is_empty() {
        return Err(PipelineError::CorruptState("no hierarchy module has validation probes".into()));
    }
    eng.teacher_report = eng.probe_teacher(&modules)?;
    let initial = eng.snapshot(&modules, "initial".into())?;
    let gaps = GapReport::from_snapshot(&initial, eng.config.tau_gap);
    write_atomic(&eng.dir.gaps(), &gaps.to_json())?;
    let deficient = deficient_modules(&gaps);
    log::info!("{} of {} modules deficient", deficient.len(), modules.len());
    eng.emit(Event::Diagnosed {
        deficient: deficient.into_iter().collect(),
        excluded: gaps.excluded.iter().cloned().collect(),
    })?;
    Ok(checkpoint(eng, Phase::Diagnosed, 0, Vec::new()))
}

fn load_diagnosis(eng: &Engine<'_>) -> Result<DiagnosisOutcome, PipelineError> {
    let initial = eng
        .trajectory
        .snapshots()
        .first()
        .cloned()
        .ok_or_else(|| PipelineError::CorruptState("no initial snapshot".into()))?;
    let gaps: GapReport<f64> = read_json(&eng.dir, &eng.dir.gaps())?;
    let deficient = deficient_modules(&gaps);
    Ok(DiagnosisOutcome { initial, gaps, deficient })
}

fn read_json<T: serde::de::DeserializeOwned>(dir: &StateDir, path: &Path) -> Result<T, PipelineError> {
    serde_json::from_str(&dir.read(path)?).map_err(|e| PipelineError::CorruptState(format!("{}: {e}", path.display())))
}

fn plan_step(eng: &mut Engine<'_>) -> Result<Checkpoint, PipelineError> {
    let DiagnosisOutcome { initial, gaps, deficient } = load_diagnosis(eng)?;
    let config = eng.config.clone();
    let (graph, source) = if deficient.is_empty() {
        (DependencyGraph::new(deficient.iter().cloned()), "empty")
    } else if let Some(path) = &config.graph_file {
        let mut graph = DependencyGraph::from_json(&eng.dir.read(path)?)?;
        for k in &deficient {
            graph.insert_vertex(k.clone());
        }
        let (graph, removed) = graph.finalize_acyclic();
        if !removed.is_empty() {
            log::warn!("graph file had cycles; dropped {} edge(s)", removed.len());
        }
        (graph, "file")
    } else {
        // Calibration visits modules most severe first; without a graph yet,
        // severity reduces to the weighted gap.
        let provisional = rank_severity(&deficient, &gaps, &DependencyGraph::new(deficient.iter().cloned()), config.alpha)?;
        let order: Vec<ModuleId> = provisional.ranked.into_iter().map(|(k, _)| k).collect();
        let outcome = calibrate(&mut *eng.student, &eng.corpus, &eng.teacher_report, &order, &config, eng.next_step)?;
        eng.next_step = outcome.next_step;
        for ev in &outcome.evidence {
            for snap in ev.trajectory.snapshots() {
                let snapshot: Value = serde_json::from_str(&snap.to_json_line()).expect("snapshot line is JSON");
                append_line(&eng.dir.calibration(), &json!({ "subject": ev.subject, "snapshot": snapshot }).to_string())?;
            }
        }
        for (n, crossed) in outcome.episodes.iter().enumerate() {
            eng.emit(Event::CalibrationEpisode { episode: n + 1, crossed: crossed.clone() })?;
        }
        let source = if outcome.interventional { "calibration" } else { "calibration_sweep" };
        (build_graph(&outcome.evidence, &deficient, &config.dependency_params(), config.tau_dep), source)
    };
    write_atomic(&eng.dir.graph(), &graph.to_json())?;
    eng.emit(Event::GraphBuilt { edges: graph.edge_count(), source: source.into() })?;

    let (ranking, targets, curriculum) = if deficient.is_empty() {
        (
            SeverityRanking { ranked: Vec::new(), alpha: config.alpha },
            TargetSet { modules: Vec::new(), fraction: config.target_fraction },
            Curriculum::empty(),
        )
    } else {
        let ranking = rank_severity(&deficient, &gaps, &graph, config.alpha)?;
        let targets = select_targets(&ranking, &deficient, config.target_fraction)?;
        let curriculum = build_curriculum(&targets, &graph, &initial, config.tau_dep)?;
        (ranking, targets.clone(), enforce_zpd(curriculum, config.tau_zpd))
    };
    write_atomic(&eng.dir.ranking(), &pretty(&ranking))?;
    write_atomic(&eng.dir.targets(), &pretty(&targets))?;
    write_atomic(&eng.dir.curriculum(), &curriculum.to_json())?;
    eng.emit(Event::TargetsSelected { targets: targets.modules.clone() })?;
    eng.emit(Event::CurriculumPlanned { stages: curriculum.stages.iter().map(|s| s.stage_id.clone()).collect() })?;
    Ok(checkpoint(eng, Phase::Planned, 0, Vec::new()))
}

fn pretty<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("value serializes")
}

pub(crate) fn read_plan(dir: &StateDir) -> Result<PlanOutcome, PipelineError> {
    let graph = DependencyGraph::from_json(&dir.read(&dir.graph())?)?;
    let curriculum = Curriculum::from_json(&dir.read(&dir.curriculum())?)
        .map_err(|e| PipelineError::CorruptState(format!("curriculum.json: {e}")))?;
    Ok(PlanOutcome { graph, ranking: read_json(dir, &dir.ranking())?, targets: read_json(dir, &dir.targets())?, curriculum })
}

/// Graph and curriculum of a planned run in `root`.
pub fn load_plan(root: &Path) -> Result<PlanOutcome, PipelineError> {
    read_plan(&StateDir::new(root))
}

/// Mean student/teacher ratio over `modules` in the latest snapshot.
fn baseline_ratio(eng: &Engine<'_>, modules: &BTreeSet<ModuleId>) -> f64 {
    let Some(last) = eng.trajectory.last() else { return 0.0 };
    let ratios: Vec<f64> = modules.iter().filter_map(|k| last.ratio(k.as_str())).collect();
    if ratios.is_empty() {
        0.0
    } else {
        ratios.iter().sum::<f64>() / ratios.len() as f64
    }
}

struct StageTally {
    accepted: usize,
    rejected: usize,
    pool: Vec<SynthesisItem>,
}

fn synth_batch(
    eng: &mut Engine<'_>,
    index: usize,
    stage_id: &str,
    batch: &str,
    prompts: &[PromptBundle],
    fctx: &FilterContext<'_>,
    tally: &mut StageTally,
) -> Result<Vec<SynthesisItem>, PipelineError> {
    let (items, malformed) = eng.synthesize(prompts)?;
    let mut report: FilterReport = filter_batch(&items, fctx, &tally.pool);
    let n = items.len();
    report.rejected.extend(malformed.into_iter().enumerate().map(|(j, mut r)| {
        r.item_index = n + j;
        r
    }));
    eng.persist_batch(index, stage_id, batch, prompts, &report)?;
    eng.emit(Event::BatchFiltered {
        stage_id: stage_id.into(),
        batch: batch.into(),
        accepted: report.accepted.len(),
        rejected: report.rejected.len(),
    })?;
    tally.accepted += report.accepted.len();
    tally.rejected += report.rejected.len();
    tally.pool.extend(report.accepted.iter().cloned());
    Ok(report.accepted)
}

fn train(eng: &mut Engine<'_>, stage_id: &str, batch: &str, items: &[SynthesisItem], epochs: usize) -> Result<(), PipelineError> {
    if items.is_empty() {
        log::warn!("{stage_id}/{batch}: no accepted items, nothing to train");
        return Ok(());
    }
    let summary = eng.student.train(items, epochs)?;
    eng.emit(Event::Trained { stage_id: stage_id.into(), batch: batch.into(), epochs: summary.epochs, items: summary.items })
}

fn gate(
    eng: &mut Engine<'_>,
    stage: &Stage<f64>,
    probe: &BTreeSet<ModuleId>,
    label: String,
    round: usize,
) -> Result<MasteryDecision<f64>, PipelineError> {
    let snap = eng.snapshot(probe, label)?;
    let d = mastery_gate(&snap.student, &snap.teacher, &stage.modules, eng.config.tau_mastery)?;
    eng.emit(Event::GateDecision {
        stage_id: stage.stage_id.clone(),
        step: snap.step,
        round,
        advance: d.advance,
        min_ratio: d.min_ratio,
        failing: d.failing_modules.iter().cloned().collect(),
    })?;
    Ok(d)
}

fn stage_step(eng: &mut Engine<'_>, cp: &Checkpoint) -> Result<Checkpoint, PipelineError> {
    let PlanOutcome { graph, curriculum, .. } = read_plan(&eng.dir)?;
    let index = cp.current_stage_index;
    let mut reports = cp.stage_reports.clone();
    if index >= curriculum.stages.len() {
        eng.emit(Event::RunCompleted { stages: reports.len() })?;
        return Ok(checkpoint(eng, Phase::Completed, index, reports));
    }
    let config = eng.config.clone();
    let hierarchy = eng.hierarchy.clone();
    let stage = curriculum.stages[index].clone();
    let id = stage.stage_id.as_str();
    let probe: BTreeSet<ModuleId> = curriculum.modules().cloned().collect();

    let out = eng.dir.stage_dir(index, id);
    if out.exists() {
        fs::remove_dir_all(&out).map_err(|e| PipelineError::io(&out, e))?;
    }
    eng.emit(Event::StageStarted { stage_index: index, stage_id: id.into() })?;

    let base = StageContext {
        stage: &stage,
        hierarchy: &hierarchy,
        graph: &graph,
        tau_dep: config.tau_dep,
        baseline_ratio: baseline_ratio(eng, &stage.modules),
        size_cap: &config.size_cap,
        complexity_cap: "",
    };
    let cap = base.difficulty_cap();
    let complexity = config.complexity_cap.clone().unwrap_or_else(|| cap.as_str().to_string());
    let ctx = StageContext { complexity_cap: &complexity, ..base };
    let permitted: BTreeMap<ModuleId, BTreeSet<ModuleId>> = stage
        .modules
        .iter()
        .map(|k| (k.clone(), recorded_prerequisites(&graph, k.as_str(), config.tau_dep)))
        .collect();
    let verifier = StructuralVerifier::default();
    let fctx = FilterContext {
        stage_modules: &stage.modules,
        permitted_prereqs: &permitted,
        difficulty_cap: cap,
        options: ValidateOptions { lenient_difficulty: config.lenient_difficulty },
        verifier: &verifier,
    };
    let mut tally = StageTally { accepted: 0, rejected: 0, pool: Vec::new() };

    // One prompt per training seed of each stage module.
    let mut prompts = Vec::new();
    for k in &stage.modules {
        let seeds: Vec<_> = eng.corpus.items_of(k.as_str(), Split::Train).cloned().collect();
        if seeds.is_empty() {
            prompts.push(render_stage_prompt(&ctx, config.items_per_seed, None)?);
        }
        for seed in &seeds {
            prompts.push(render_stage_prompt(&ctx, config.items_per_seed, config.seed_context.then_some(seed))?);
        }
    }
    let items = synth_batch(eng, index, id, "stage", &prompts, &fctx, &mut tally)?;

    let mut epochs = 0;
    let mut decision;
    loop {
        epochs += 1;
        train(eng, id, "stage", &items, 1)?;
        decision = gate(eng, &stage, &probe, format!("{id}/epoch-{epochs}"), 0)?;
        if decision.advance || epochs == config.max_epochs_per_stage || items.is_empty() {
            break;
        }
    }

    let mut rounds = 0;
    while !decision.advance && rounds < config.max_remedial_rounds {
        rounds += 1;
        let weak = decision.failing_modules.clone();
        eng.emit(Event::RemedialRound { stage_id: id.into(), round: rounds, weak: weak.iter().cloned().collect() })?;
        let num = config.remedial_items.unwrap_or(config.items_per_seed * weak.len());
        let prompt = render_remedial_prompt(&ctx, &weak, num, rounds)?;
        let batch = format!("remedial-{rounds}");
        let items = synth_batch(eng, index, id, &batch, &[prompt], &fctx, &mut tally)?;
        train(eng, id, &batch, &items, config.max_epochs_per_stage)?;
        decision = gate(eng, &stage, &probe, format!("{id}/{batch}"), rounds)?;
    }

    let outcome = if decision.advance {
        StageOutcome::Passed
    } else {
        let abort = config.stall_policy == StallPolicy::Abort;
        eng.emit(Event::MasteryStall { stage_id: id.into(), abort })?;
        if abort {
            return Err(PipelineError::MasteryStall { stage_id: id.into(), rounds });
        }
        log::warn!("{id}: mastery not reached after {rounds} remedial round(s); proceeding");
        StageOutcome::ProceededWithWarning
    };

    let mut bridging_accepted = 0;
    if decision.advance && config.bridging && curriculum.zpd_flags.get(index + 1) == Some(&ZpdFlag::Warn) {
        let num = config.bridging_items.unwrap_or(config.items_per_seed * stage.modules.len());
        let prompt = render_bridging_prompt(&ctx, num)?;
        let bctx = FilterContext { difficulty_cap: cap.one_notch_up(), ..fctx };
        let items = synth_batch(eng, index, id, "bridging", &[prompt], &bctx, &mut tally)?;
        bridging_accepted = items.len();
        train(eng, id, "bridging", &items, 1)?;
        eng.snapshot(&probe, format!("{id}/bridging"))?;
    }

    eng.emit(Event::StageFinished { stage_id: id.into(), outcome })?;
    reports.push(StageReport {
        stage_id: id.into(),
        modules: stage.modules.clone(),
        outcome,
        epochs,
        remedial_rounds: rounds,
        min_ratio: decision.min_ratio,
        accepted: tally.accepted,
        rejected: tally.rejected,
        bridging_accepted,
    });
    Ok(checkpoint(eng, Phase::StageRunning, index + 1, reports))
}
