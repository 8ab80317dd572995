//! Prompt templating and the deterministic template backend text.
//!
//! Templates are plain text with four named placeholders, each required
//! exactly once: `{task_instruction}`, `{prediction_summary}`,
//! `{feature_lines}`, `{style_instruction}`. Placeholder problems surface
//! when a template is constructed, never at render time. All numbers are
//! rendered with fixed rounding so the same payload yields the same prompt
//! on every platform.

use super::payload::AttributionPayload;
use super::ExplainError;
use std::path::Path;

pub const DEFAULT_TASK_INSTRUCTION: &str = "You are given one prediction from a machine-learning \
model together with the contribution of each input feature. In plain language, explain the \
importance of the following features in determining the model's prediction.";

pub const DEFAULT_STYLE_INSTRUCTION: &str = "Write a short paragraph for a non-technical reader. \
Say whether each feature pushed the prediction higher or lower. Do not use technical jargon \
such as SHAP, margin, or coalition.";

const DEFAULT_TEMPLATE: &str = "{task_instruction}\n\n{prediction_summary}\n\nFeature \
contributions, most influential first:\n{feature_lines}\n\n{style_instruction}\n";

const PLACEHOLDERS: [&str; 4] = [
    "{task_instruction}",
    "{prediction_summary}",
    "{feature_lines}",
    "{style_instruction}",
];

/// A validated prompt template.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    text: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate {
            text: DEFAULT_TEMPLATE.to_string(),
        }
    }
}

impl PromptTemplate {
    /// Validate that every placeholder appears exactly once.
    pub fn new(text: impl Into<String>) -> Result<Self, ExplainError> {
        let text = text.into();
        for placeholder in PLACEHOLDERS {
            match text.matches(placeholder).count() {
                1 => {}
                0 => {
                    return Err(ExplainError::Template(format!(
                        "missing placeholder {placeholder}"
                    )))
                }
                n => {
                    return Err(ExplainError::Template(format!(
                        "placeholder {placeholder} appears {n} times, expected exactly once"
                    )))
                }
            }
        }
        Ok(PromptTemplate { text })
    }

    pub fn from_file<P: AsRef<Path>>(path: P) -> Result<Self, ExplainError> {
        Self::new(std::fs::read_to_string(path)?)
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

/// Feature value for display: fixed 4-decimal rounding with trailing zeros
/// trimmed, `missing` for the missing state.
pub(crate) fn format_value(value: Option<f64>) -> String {
    match value {
        None => "missing".to_string(),
        Some(v) => {
            let v = if v == 0.0 { 0.0 } else { v }; // fold -0.0
            let mut s = format!("{v:.4}");
            while s.ends_with('0') {
                s.pop();
            }
            if s.ends_with('.') {
                s.pop();
            }
            s
        }
    }
}

/// Attribution for display: always-signed, fixed 4 decimals.
fn format_phi(phi: f64) -> String {
    if phi == 0.0 {
        "+0.0000".to_string()
    } else {
        format!("{phi:+.4}")
    }
}

/// One sentence stating what the model predicted.
pub(crate) fn prediction_summary(payload: &AttributionPayload) -> String {
    let margin = format!("{:+.4}", payload.predicted_margin);
    match (&payload.prediction_label, payload.predicted_probability) {
        (Some(label), Some(p)) => {
            format!("The model predicts \"{label}\" with probability {p:.4} (score {margin}).")
        }
        (Some(label), None) => format!("The model predicts \"{label}\" (score {margin})."),
        (None, Some(p)) => format!("The model predicts a probability of {p:.4} (score {margin})."),
        (None, None) => format!("The model predicts a score of {margin}."),
    }
}

/// Substitute the four placeholders. The template is walked once, so values
/// containing placeholder-like text are never re-expanded.
fn substitute(template: &str, fills: &[(&str, &str); 4]) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while !rest.is_empty() {
        let next = fills
            .iter()
            .filter_map(|(key, value)| rest.find(key).map(|at| (at, *key, *value)))
            .min_by_key(|(at, _, _)| *at);
        match next {
            Some((at, key, value)) => {
                out.push_str(&rest[..at]);
                out.push_str(value);
                rest = &rest[at + key.len()..];
            }
            None => {
                out.push_str(rest);
                break;
            }
        }
    }
    out
}

/// Render the prompt: the top `min(top_k, n)` entries become one line each
/// of the form `- name = value (SHAP: +0.1234)`.
pub fn render_prompt(
    payload: &AttributionPayload,
    template: &PromptTemplate,
    top_k: usize,
) -> Result<String, ExplainError> {
    if top_k == 0 {
        return Err(ExplainError::TopKZero);
    }
    let feature_lines = payload
        .top_entries(top_k)
        .iter()
        .map(|e| {
            format!(
                "- {} = {} (SHAP: {})",
                e.feature_name,
                format_value(e.feature_value),
                format_phi(e.phi)
            )
        })
        .collect::<Vec<_>>()
        .join("\n");
    let summary = prediction_summary(payload);
    Ok(substitute(
        &template.text,
        &[
            ("{task_instruction}", DEFAULT_TASK_INSTRUCTION),
            ("{prediction_summary}", &summary),
            ("{feature_lines}", &feature_lines),
            ("{style_instruction}", DEFAULT_STYLE_INSTRUCTION),
        ],
    ))
}

/// Deterministic offline stand-in for an LLM: one summary sentence, then a
/// sentence per top-k feature whose direction verb follows the sign of phi.
pub fn template_backend_generate(payload: &AttributionPayload, top_k: usize) -> String {
    let mut sentences = vec![prediction_summary(payload)];
    for entry in payload.top_entries(top_k) {
        let name = &entry.feature_name;
        let value = format_value(entry.feature_value);
        let sentence = if entry.phi > 0.0 {
            format!(
                "{name} = {value}, which increases the predicted score by {:.3}.",
                entry.phi.abs()
            )
        } else if entry.phi < 0.0 {
            format!(
                "{name} = {value}, which decreases the predicted score by {:.3}.",
                entry.phi.abs()
            )
        } else {
            format!("{name} = {value}, which has no effect on the predicted score.")
        };
        sentences.push(sentence);
    }
    sentences.join(" ")
}
