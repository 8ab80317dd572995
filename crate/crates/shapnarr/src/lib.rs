//! SHAP feature attributions for gradient-boosted tree ensembles, narrated
//! in plain language.
//!
//! The crate is organized around four stages:
//!
//! 1. [`model`] parses a tree ensemble from its JSON dump format and
//!    evaluates margins and probabilities, including missing-value routing.
//! 2. [`data`] loads tabular CSV data under a declared per-column encoding
//!    schema and selects background sets for the value function.
//! 3. [`shap`] computes Shapley attributions for a single prediction, either
//!    exactly over all coalitions or with a seeded permutation estimator.
//! 4. [`explain`] turns an attribution result into a prompt, obtains text
//!    from a pluggable generation backend (an OpenAI-compatible HTTP endpoint
//!    or a deterministic offline template), cleans it up, and mechanically
//!    verifies that the text stays faithful to the attributions.
//!
//! Everything is deterministic given a seed: the same model, row, background
//! selection, and seed produce bit-identical attributions regardless of how
//! many worker threads are used.

pub mod data;
pub mod explain;
pub mod model;
pub mod shap;

pub use data::{ColumnKind, ColumnSchema, DataError, Dataset, MissingPolicy};
pub use explain::{
    build_attribution_payload, generate, post_process, render_prompt, run_explanation,
    template_backend_generate, verify_explanation, AttributionEntry, AttributionPayload,
    BackendError, Direction, ExplainError, ExplanationResult, GenerationBackend, GenerationParams,
    HttpBackend, PromptTemplate, TemplateBackend, VerificationReport,
};
pub use model::{FeatureVector, ModelError, Objective, Tree, TreeEnsemble};
pub use shap::{
    exact_shap, exact_shap_with_limit, permutation_shap, permutation_shap_with_stats,
    value_function, BackgroundSet, Coalition, PermutationStats, ShapError, ShapMethod, ShapResult,
    DEFAULT_EXACT_LIMIT,
};
