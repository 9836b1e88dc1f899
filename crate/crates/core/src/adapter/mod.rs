//! Teacher prompts, the synthesized-item schema and the item filter.

mod filter;
mod prompts;
mod schema;

use thiserror::Error;

pub use filter::{
    dedup_key, filter_batch, jaccard, near_duplicates, shingles, FilterContext, FilterReport, Rejection,
    StructuralVerifier, Verifier, DEDUP_THRESHOLD,
};
pub use prompts::{
    recorded_prerequisites, render_bridging_prompt, render_remedial_prompt, render_stage_prompt,
    render_system_prompt, PromptBundle, PromptKind, StageContext,
};
pub use schema::{
    extract_items, validate_item, AdapterFlags, CognitiveLoad, ItemMetadata, Reason, ReasonCode, Solution,
    SynthesisItem, ValidateOptions,
};

#[derive(Debug, Error, PartialEq)]
pub enum AdapterError {
    #[error("requested item count must be at least 1")]
    ZeroCount,
    #[error("no weak sub-skills given")]
    EmptyWeakSet,
    #[error("module {0} is not in the hierarchy")]
    UnknownModule(String),
}

#[cfg(test)]
mod tests;
