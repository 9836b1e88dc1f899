mod overrides;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pedagogy_core::adapter::{
    extract_items, filter_batch, recorded_prerequisites, FilterContext, StructuralVerifier, ValidateOptions,
};
use pedagogy_core::backends::{CommandTrainer, ExternalStudent, StudentBackend, TeacherBackend};
use pedagogy_core::corpus::{ingest, parse_seed_jsonl, SeedCorpus};
use pedagogy_core::knowledge::{hierarchy_prompt, parse_hierarchy, Difficulty, KnowledgeHierarchy, ModuleId};
use pedagogy_core::pipeline::{
    self, PipelineError, RunConfig, RunOptions, StateDir, StudentSelection, TeacherSelection,
};
use pedagogy_http::{HttpError, HttpTeacher};
use serde_json::{json, Value};

use overrides::Overrides;

const HIERARCHY_SYSTEM_PROMPT: &str = "You design curricula. Reply with the JSON array only.";

#[derive(Parser)]
#[command(name = "pedagogy", version, about = "Gap-driven curriculum distillation runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Inputs {
    /// Run configuration (TOML). Defaults apply to anything it leaves out.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Knowledge hierarchy JSON.
    #[arg(long)]
    hierarchy: PathBuf,
    /// Seed items, one JSON object per line.
    #[arg(long)]
    seeds: PathBuf,
    /// Run-state directory.
    #[arg(long)]
    state_dir: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand)]
enum Command {
    /// Build a knowledge hierarchy with the teacher, or normalize one from a file.
    Init {
        #[arg(long)]
        domain: String,
        #[arg(long, default_value = "")]
        description: String,
        /// Existing hierarchy (array or object form) instead of asking the teacher.
        #[arg(long)]
        from: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output path for the hierarchy JSON.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Probe teacher and student and write the gap report.
    Diagnose(Inputs),
    /// Calibrate, build the dependency graph and plan the curriculum.
    Plan {
        #[arg(long)]
        state_dir: PathBuf,
    },
    /// Full run: diagnose, plan and train every stage.
    Run {
        #[command(flatten)]
        inputs: Inputs,
        /// Stop after this many stages; continue later with `resume`.
        #[arg(long)]
        halt_after_stages: Option<usize>,
    },
    /// Continue a run from its last checkpoint.
    Resume {
        #[arg(long)]
        state_dir: PathBuf,
    },
    /// Print the summary of a run.
    Report {
        #[arg(long)]
        state_dir: PathBuf,
    },
    /// Run the item filter over a file of synthesized items.
    ValidateData {
        /// JSON array, JSON Lines, or raw teacher output.
        #[arg(long)]
        items: PathBuf,
        /// Check stage alignment against this stage of a planned run.
        #[arg(long, requires = "stage")]
        state_dir: Option<PathBuf>,
        #[arg(long)]
        stage: Option<String>,
        #[arg(long)]
        lenient_difficulty: bool,
    },
}

#[derive(Debug)]
enum CliError {
    Pipeline(PipelineError),
    Http(HttpError),
    Usage(String),
    Rejected(usize),
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        Self::Pipeline(e)
    }
}

impl From<HttpError> for CliError {
    fn from(e: HttpError) -> Self {
        Self::Http(e)
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            Self::Pipeline(e) => e.exit_code() as u8,
            Self::Http(_) | Self::Usage(_) => 2,
            Self::Rejected(_) => 1,
        }
    }

    fn line(&self) -> Value {
        let (kind, message) = match self {
            Self::Pipeline(e) => (e.kind(), e.to_string()),
            Self::Http(e) => ("config", e.to_string()),
            Self::Usage(m) => ("usage", m.clone()),
            Self::Rejected(n) => ("items_rejected", format!("{n} item(s) rejected")),
        };
        json!({"error": kind, "message": message, "exit_code": self.code()})
    }
}

fn io(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Pipeline(PipelineError::Io { path: path.display().to_string(), message: e.to_string() })
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| io(path, e))
}

fn load_config(path: Option<&Path>, overrides: &Overrides) -> Result<RunConfig, CliError> {
    let base = match path {
        Some(p) => RunConfig::from_toml(&read(p)?)?,
        None => RunConfig::default(),
    };
    Ok(overrides.apply(base)?)
}

fn teacher(config: &RunConfig, corpus: &SeedCorpus) -> Result<Box<dyn TeacherBackend>, CliError> {
    if let Some(t) = config.teacher.build_local(corpus)? {
        return Ok(t);
    }
    match &config.teacher {
        TeacherSelection::Http(s) => Ok(Box::new(HttpTeacher::new(s)?)),
        _ => unreachable!("local teachers are built above"),
    }
}

fn student(config: &RunConfig, corpus: &SeedCorpus, state_dir: &Path) -> Result<Box<dyn StudentBackend>, CliError> {
    match &config.student {
        StudentSelection::Simulated(s) => Ok(Box::new(s.build(corpus, config.rng_seed))),
        StudentSelection::External { chat, train_command } => {
            let trainer = CommandTrainer::parse(train_command, state_dir.join("training"))
                .ok_or_else(|| CliError::Usage("student train_command is empty".into()))?;
            Ok(Box::new(ExternalStudent::new(Box::new(HttpTeacher::new(chat)?), trainer)))
        }
    }
}

fn load_inputs(inputs: &Inputs) -> Result<(RunConfig, KnowledgeHierarchy, SeedCorpus), CliError> {
    let config = load_config(inputs.config.as_deref(), &inputs.overrides)?;
    let hierarchy = KnowledgeHierarchy::from_json(&read(&inputs.hierarchy)?, "domain").map_err(PipelineError::from)?;
    let records = parse_seed_jsonl(&read(&inputs.seeds)?).map_err(PipelineError::from)?;
    let corpus = ingest(records, &hierarchy).map_err(PipelineError::from)?;
    // Split here so the student sees the same probes the run will use.
    let corpus = if corpus.is_split() { corpus } else { corpus.split(config.rng_seed) };
    Ok((config, hierarchy, corpus))
}

/// Config and corpus as persisted in a state directory.
fn load_state(dir: &Path) -> Result<(RunConfig, SeedCorpus), CliError> {
    let sd = StateDir::new(dir);
    let config = RunConfig::from_toml(&read(&sd.config())?)?;
    let corpus: SeedCorpus = serde_json::from_str(&read(&sd.corpus())?)
        .map_err(|e| PipelineError::CorruptState(format!("corpus.json: {e}")))?;
    Ok((config, corpus))
}

fn print_json(v: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(v).expect("output serializes"));
}

fn validate_data(
    items_path: &Path,
    state_dir: Option<&Path>,
    stage: Option<&str>,
    lenient: bool,
) -> Result<(), CliError> {
    let text = read(items_path)?;
    let items: Vec<Value> = match serde_json::from_str::<Value>(&text) {
        Ok(Value::Array(a)) => a,
        Ok(v @ Value::Object(_)) => vec![v],
        _ if text.lines().filter(|l| !l.trim().is_empty()).all(|l| l.trim_start().starts_with('{')) => text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| CliError::Usage(format!("{}: {e}", items_path.display()))))
            .collect::<Result<_, _>>()?,
        _ => extract_items(&text).map_err(|r| CliError::Usage(format!("no item payload: {}", r.code.as_str())))?,
    };
    let verifier = StructuralVerifier::default();
    let options = ValidateOptions { lenient_difficulty: lenient };
    let report = match (state_dir, stage) {
        (Some(dir), Some(stage_id)) => {
            let plan = pipeline::load_plan(dir)?;
            let (config, _) = load_state(dir)?;
            let st = plan
                .curriculum
                .stages
                .iter()
                .find(|s| s.stage_id == stage_id)
                .ok_or_else(|| CliError::Usage(format!("no stage {stage_id} in the curriculum")))?;
            let hierarchy = KnowledgeHierarchy::from_json(&read(&StateDir::new(dir).hierarchy())?, "")
                .map_err(PipelineError::from)?;
            let cap = st
                .modules
                .iter()
                .filter_map(|k| hierarchy.get(k.as_str()))
                .map(|m| m.difficulty_level)
                .max()
                .unwrap_or(Difficulty::Introductory);
            let permitted: BTreeMap<ModuleId, BTreeSet<ModuleId>> = st
                .modules
                .iter()
                .map(|k| (k.clone(), recorded_prerequisites(&plan.graph, k.as_str(), config.tau_dep)))
                .collect();
            let ctx = FilterContext {
                stage_modules: &st.modules,
                permitted_prereqs: &permitted,
                difficulty_cap: cap,
                options,
                verifier: &verifier,
            };
            filter_batch(&items, &ctx, &[])
        }
        _ => {
            // Without a stage, alignment checks are vacuous: every module and
            // prerequisite seen in the file is allowed.
            let seen: BTreeSet<ModuleId> = items
                .iter()
                .flat_map(|v| {
                    let module = v.get("module").and_then(Value::as_str).map(ModuleId::new);
                    let prereqs = v
                        .get("prereq")
                        .and_then(Value::as_array)
                        .into_iter()
                        .flatten()
                        .filter_map(Value::as_str)
                        .map(ModuleId::new);
                    module.into_iter().chain(prereqs).collect::<Vec<_>>()
                })
                .collect();
            let permitted = seen.iter().map(|k| (k.clone(), seen.clone())).collect();
            let ctx = FilterContext {
                stage_modules: &seen,
                permitted_prereqs: &permitted,
                difficulty_cap: Difficulty::Advanced,
                options,
                verifier: &verifier,
            };
            filter_batch(&items, &ctx, &[])
        }
    };
    print_json(&json!({
        "accepted": report.accepted.len(),
        "rejected": report.rejected.iter().map(|r| json!({"item_index": r.item_index, "reasons": r.reasons})).collect::<Vec<_>>(),
        "acceptance_rate": report.acceptance_rate(),
    }));
    if report.rejected.is_empty() {
        Ok(())
    } else {
        Err(CliError::Rejected(report.rejected.len()))
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Init { domain, description, from, config, out, overrides } => {
            let hierarchy = match from {
                Some(path) => KnowledgeHierarchy::from_json(&read(&path)?, &domain).map_err(PipelineError::from)?,
                None => {
                    let config = load_config(config.as_deref(), &overrides)?;
                    let empty = SeedCorpus { items: Vec::new(), split_seed: None };
                    let t = teacher(&config, &empty)?;
                    let raw = t
                        .generate(HIERARCHY_SYSTEM_PROMPT, &hierarchy_prompt(&domain, &description))
                        .map_err(PipelineError::from)?;
                    parse_hierarchy(&raw, &domain).map_err(PipelineError::from)?
                }
            };
            if !hierarchy.has_target_size() {
                log::warn!("hierarchy has {} modules, outside the usual range", hierarchy.modules.len());
            }
            fs::write(&out, hierarchy.to_json()).map_err(|e| io(&out, e))?;
            print_json(&json!({"modules": hierarchy.modules.len(), "out": out}));
        }
        Command::Diagnose(inputs) => {
            let (config, hierarchy, corpus) = load_inputs(&inputs)?;
            let t = teacher(&config, &corpus)?;
            let mut s = student(&config, &corpus, &inputs.state_dir)?;
            let d = pipeline::diagnose(config, corpus, hierarchy, &t, &mut *s, &inputs.state_dir)?;
            print_json(&d.gaps);
        }
        Command::Plan { state_dir } => {
            let (config, corpus) = load_state(&state_dir)?;
            let t = teacher(&config, &corpus)?;
            let mut s = student(&config, &corpus, &state_dir)?;
            let p = pipeline::plan(&state_dir, &t, &mut *s)?;
            print_json(&p.curriculum);
        }
        Command::Run { inputs, halt_after_stages } => {
            let (config, hierarchy, corpus) = load_inputs(&inputs)?;
            let t = teacher(&config, &corpus)?;
            let mut s = student(&config, &corpus, &inputs.state_dir)?;
            let options = RunOptions { halt_after_stages };
            print_json(&pipeline::run(config, corpus, hierarchy, &t, &mut *s, &inputs.state_dir, options)?);
        }
        Command::Resume { state_dir } => {
            let (config, corpus) = load_state(&state_dir)?;
            let t = teacher(&config, &corpus)?;
            let mut s = student(&config, &corpus, &state_dir)?;
            print_json(&pipeline::resume(&state_dir, &t, &mut *s, RunOptions::default())?);
        }
        Command::Report { state_dir } => print_json(&pipeline::report(&state_dir)?),
        Command::ValidateData { items, state_dir, stage, lenient_difficulty } => {
            validate_data(&items, state_dir.as_deref(), stage.as_deref(), lenient_difficulty)?
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.code())
        }
    }
}
