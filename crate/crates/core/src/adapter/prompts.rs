use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::AdapterError;
use crate::corpus::SeedItem;
use crate::knowledge::{DependencyGraph, Difficulty, KnowledgeHierarchy, ModuleId};
use crate::organizer::Stage;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Stage,
    Remedial,
    Bridging,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system: String,
    pub user: String,
    pub kind: PromptKind,
}

const SYSTEM_PROMPT: &str = "\
You are a teacher model writing synthetic training examples for a smaller student model. \
Shape every example so that it fits what the student can currently absorb.

Each example must satisfy all of the following adaptation rules:
1) Abstract Concept Concretization: open with a familiar, concrete situation and only then move to the formal statement.
2) Complex Reasoning Decomposition: spell out the reasoning as a series of short, explicit steps.
3) Cognitive Load Management: keep the instance small and raise difficulty only in small increments.
4) Representation Format Optimization: write every solution with the same stepwise layout.
5) Linguistic Complexity Reduction: use plain words, short sentences and simple connectors such as \"first\", \"next\" and \"so\".

Drop and rewrite any example whose reasoning or verification does not hold.
Return only output that matches the JSON schema given in the user message.";

const SCHEMA_TEXT: &str = r#"Output format: a JSON array. Every key is required except metadata.seed_style_ref.
[
  {
    "module": "<knowledge unit id>",
    "prereq": ["<prerequisite id>", "..."],
    "difficulty_tag": "<introductory|intermediate|advanced>",
    "problem": "<concrete scenario, then the formal task>",
    "solution": {
      "steps": ["Step 1: ...", "Step 2: ..."],
      "final_answer": "<canonical answer>",
      "verification": "<independent check of the answer>"
    },
    "adapter_flags": {
      "concretization": true,
      "decomposition": true,
      "cognitive_load": {"scale": "<instance size>", "notes": "<what was simplified>"},
      "format_template": "Stepwise-3",
      "simplified_language": true
    },
    "metadata": {"stage_id": "<stage id>", "seed_style_ref": "<seed id>"}
  }
]"#;

/// The fixed system prompt shared by all synthesis calls.
pub fn render_system_prompt() -> String {
    SYSTEM_PROMPT.to_string()
}

/// Everything a stage prompt needs besides the item count.
pub struct StageContext<'a, S> {
    pub stage: &'a Stage<S>,
    pub hierarchy: &'a KnowledgeHierarchy,
    pub graph: &'a DependencyGraph<S>,
    pub tau_dep: S,
    pub baseline_ratio: S,
    pub size_cap: &'a str,
    pub complexity_cap: &'a str,
}

impl<S: Scalar> StageContext<'_, S> {
    /// Highest hierarchy difficulty among the stage's modules.
    pub fn difficulty_cap(&self) -> Difficulty {
        self.stage
            .modules
            .iter()
            .filter_map(|k| self.hierarchy.get(k.as_str()))
            .map(|m| m.difficulty_level)
            .max()
            .unwrap_or(Difficulty::Introductory)
    }

    fn check_modules<'m>(&self, modules: impl IntoIterator<Item = &'m ModuleId>) -> Result<(), AdapterError> {
        for k in modules {
            if !self.hierarchy.contains(k.as_str()) {
                return Err(AdapterError::UnknownModule(k.to_string()));
            }
        }
        Ok(())
    }
}

/// Prerequisites the graph records for `k`, or none if `k` is not a vertex.
pub fn recorded_prerequisites<S: Scalar>(graph: &DependencyGraph<S>, k: &str, tau_dep: S) -> BTreeSet<ModuleId> {
    graph.prerequisites(k, tau_dep).unwrap_or_default()
}

fn module_list<'a>(modules: impl IntoIterator<Item = &'a ModuleId>) -> String {
    modules.into_iter().map(ModuleId::as_str).collect::<Vec<_>>().join(", ")
}

fn prereq_list<'a, S: Scalar>(
    graph: &DependencyGraph<S>,
    tau_dep: S,
    modules: impl IntoIterator<Item = &'a ModuleId>,
) -> String {
    let parts: Vec<(String, BTreeSet<ModuleId>)> = modules
        .into_iter()
        .map(|k| (k.to_string(), recorded_prerequisites(graph, k.as_str(), tau_dep)))
        .collect();
    if parts.iter().all(|(_, p)| p.is_empty()) {
        return "none".into();
    }
    parts
        .iter()
        .map(|(k, p)| if p.is_empty() { format!("{k}: none") } else { format!("{k}: {}", module_list(p)) })
        .collect::<Vec<_>>()
        .join("; ")
}

fn context_block<'a, S: Scalar>(
    ctx: &StageContext<'_, S>,
    modules: impl IntoIterator<Item = &'a ModuleId> + Clone,
    cap: Difficulty,
) -> String {
    format!(
        "Target Domain: {}\nCurriculum Stage: {}\nKnowledge Units: {}\nPrerequisites: {}\n\
         Student Baseline (relative to teacher): {:.3}\nDifficulty Cap: {}\n",
        ctx.hierarchy.domain,
        ctx.stage.stage_id,
        module_list(modules.clone()),
        prereq_list(ctx.graph, ctx.tau_dep, modules),
        ctx.baseline_ratio.to_f64_lossy(),
        cap.as_str(),
    )
}

fn seed_block(seed: Option<&SeedItem>) -> String {
    match seed {
        Some(s) => format!(
            "\nStyle reference (seed {}, module {}):\nProblem: {}\nAnswer: {}\n",
            s.id, s.module_id, s.prompt, s.reference
        ),
        None => String::new(),
    }
}

pub fn render_stage_prompt<S: Scalar>(
    ctx: &StageContext<'_, S>,
    num: usize,
    seed: Option<&SeedItem>,
) -> Result<PromptBundle, AdapterError> {
    if num == 0 {
        return Err(AdapterError::ZeroCount);
    }
    ctx.check_modules(&ctx.stage.modules)?;
    let user = format!(
        "{context}\nGenerate {num} new synthetic examples for this stage.\n\n\
         Requirements:\n\
         - Follow all five adaptation rules.\n\
         - Load limits: problem size at most {size}; symbolic or arithmetic complexity at most {complexity}.\n\
         - Each problem moves from a concrete scenario to its symbolic form.\n\
         - Each solution shows explicit step-by-step reasoning and a verification.\n\
         - Use only the knowledge units and prerequisites listed above.\n\
         {seed}\n{schema}\n",
        context = context_block(ctx, &ctx.stage.modules, ctx.difficulty_cap()),
        size = ctx.size_cap,
        complexity = ctx.complexity_cap,
        seed = seed_block(seed),
        schema = SCHEMA_TEXT,
    );
    Ok(PromptBundle { system: render_system_prompt(), user, kind: PromptKind::Stage })
}

pub fn render_remedial_prompt<S: Scalar>(
    ctx: &StageContext<'_, S>,
    weak_subskills: &BTreeSet<ModuleId>,
    num: usize,
    round: usize,
) -> Result<PromptBundle, AdapterError> {
    if weak_subskills.is_empty() {
        return Err(AdapterError::EmptyWeakSet);
    }
    if num == 0 {
        return Err(AdapterError::ZeroCount);
    }
    ctx.check_modules(weak_subskills)?;
    let weak = module_list(weak_subskills);
    let user = format!(
        "The student has not yet reached mastery on {stage}/{weak}.\n\
         Generate {num} simpler remedial examples that cover only these weak sub-skills: {weak}\n\n\
         {context}\n\
         Constraints:\n\
         - Cut linguistic and structural complexity further.\n\
         - Keep instances as small as possible and leave out distracting details.\n\
         - Keep the explicit step breakdown and the verification.\n\
         - This is remedial round {round}; do not repeat examples from earlier rounds.\n\
         - Use the same JSON schema.\n\n{schema}\n",
        stage = ctx.stage.stage_id,
        context = context_block(ctx, weak_subskills, ctx.difficulty_cap()),
        schema = SCHEMA_TEXT,
    );
    Ok(PromptBundle { system: render_system_prompt(), user, kind: PromptKind::Remedial })
}

pub fn render_bridging_prompt<S: Scalar>(ctx: &StageContext<'_, S>, num: usize) -> Result<PromptBundle, AdapterError> {
    if num == 0 {
        return Err(AdapterError::ZeroCount);
    }
    ctx.check_modules(&ctx.stage.modules)?;
    let user = format!(
        "The student has reached mastery on {stage}/{units}.\n\
         Generate {num} bridging examples whose complexity is SLIGHTLY higher \
         (one notch up in scale, coefficients or constraints, no more).\n\n\
         {context}\n\
         Constraints:\n\
         - Raise difficulty by a single bounded step; never skip a level.\n\
         - Keep following the five adaptation rules.\n\
         - Use the same JSON schema.\n\n{schema}\n",
        stage = ctx.stage.stage_id,
        units = module_list(&ctx.stage.modules),
        context = context_block(ctx, &ctx.stage.modules, ctx.difficulty_cap().one_notch_up()),
        schema = SCHEMA_TEXT,
    );
    Ok(PromptBundle { system: render_system_prompt(), user, kind: PromptKind::Bridging })
}
