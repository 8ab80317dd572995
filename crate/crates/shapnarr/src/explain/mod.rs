//! From attributions to a verified plain-language explanation.
//!
//! The pipeline is: zip attributions into an ordered payload
//! ([`build_attribution_payload`]), render a prompt from a template
//! ([`render_prompt`]), obtain text from a [`GenerationBackend`] with retry
//! handling ([`generate`]), clean the text up ([`post_process`]), and
//! mechanically check that it stays faithful to the attributions
//! ([`verify_explanation`]). [`run_explanation`] chains the steps.
//!
//! Two backends ship: [`HttpBackend`] speaks an OpenAI-compatible
//! completions protocol for a locally served LLM, and [`TemplateBackend`]
//! produces a deterministic sentence per feature so the pipeline is fully
//! testable offline.

mod backend;
mod payload;
mod post;
mod prompt;
mod verify;

pub use backend::{
    generate, BackendError, GenerationBackend, GenerationParams, HttpBackend, TemplateBackend,
};
pub use payload::{build_attribution_payload, AttributionEntry, AttributionPayload};
pub use post::post_process;
pub use prompt::{
    render_prompt, template_backend_generate, PromptTemplate, DEFAULT_STYLE_INSTRUCTION,
    DEFAULT_TASK_INSTRUCTION,
};
pub use verify::{verify_explanation, Direction, VerificationReport};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Character budget applied to explanations when the caller does not pick
/// one.
pub const DEFAULT_MAX_CHARS: usize = 2000;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("template error: {0}")]
    Template(String),
    #[error("{what} has length {actual}, expected {expected}")]
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("top_k must be at least 1")]
    TopKZero,
    #[error("invalid generation params: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("post-processing removed all generated text")]
    EmptyAfterPostProcess,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// The explanation produced for one prediction, together with everything
/// needed to reproduce and audit it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationResult {
    pub raw_text: String,
    pub final_text: String,
    pub backend_id: String,
    pub params: GenerationParams,
    pub verification: VerificationReport,
}

/// Render, generate, post-process, verify.
pub fn run_explanation(
    backend: &dyn GenerationBackend,
    payload: &AttributionPayload,
    template: &PromptTemplate,
    params: &GenerationParams,
    top_k: usize,
    max_chars: usize,
) -> Result<ExplanationResult, ExplainError> {
    params.validate()?;
    let prompt = render_prompt(payload, template, top_k)?;
    let raw_text = generate(backend, &prompt, params)?;
    let final_text = post_process(&raw_text, Some(&prompt), max_chars);
    if final_text.is_empty() {
        return Err(ExplainError::EmptyAfterPostProcess);
    }
    let verification = verify_explanation(payload, &final_text, top_k);
    Ok(ExplanationResult {
        raw_text,
        final_text,
        backend_id: backend.id().to_string(),
        params: params.clone(),
        verification,
    })
}
