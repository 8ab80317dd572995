//! Mechanical faithfulness check of an explanation against its payload.
//!
//! For each top-k feature the report records whether the text mentions the
//! feature's display name (case-insensitive substring) and whether the
//! direction word nearest to that mention inside the mentioning sentence
//! agrees with the sign of phi. The direction lexicons are fixed word-stem
//! lists shipped below; the check is deliberately simple so that the
//! verifier itself is explainable. A feature whose name is a substring of
//! an earlier-mentioned feature's name can be matched against the wrong
//! sentence; distinct non-overlapping names avoid that.

use super::payload::AttributionPayload;
use super::post::split_sentences;
use serde::{Deserialize, Serialize};

/// Word stems read as "pushes the prediction up".
const INCREASE_STEMS: [&str; 5] = ["increas", "rais", "higher", "boost", "improv"];
/// Word stems read as "pushes the prediction down".
const DECREASE_STEMS: [&str; 4] = ["decreas", "reduc", "lower", "hurt"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Consistent,
    Contradicted,
    Indeterminate,
}

/// Faithfulness report over the top-k payload entries (k is clamped to the
/// number of features). `coverage` is the mentioned fraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub top_k: usize,
    /// Display names of the examined entries, in payload order.
    pub features: Vec<String>,
    pub mentioned: Vec<bool>,
    pub directional_consistency: Vec<Direction>,
    pub coverage: f64,
}

fn sign_of(phi: f64) -> i8 {
    if phi > 0.0 {
        1
    } else if phi < 0.0 {
        -1
    } else {
        0
    }
}

/// Direction words in `sentence` as (char offset, sign) pairs.
fn direction_words(sentence: &str) -> Vec<(usize, i8)> {
    let lower = sentence.to_lowercase();
    let chars: Vec<char> = lower.chars().collect();
    let mut words = Vec::new();
    let mut start: Option<usize> = None;
    for i in 0..=chars.len() {
        let is_word = i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_');
        match (start, is_word) {
            (None, true) => start = Some(i),
            (Some(s), false) => {
                let word: String = chars[s..i].iter().collect();
                if INCREASE_STEMS.iter().any(|stem| word.starts_with(stem)) {
                    words.push((s, 1));
                } else if DECREASE_STEMS.iter().any(|stem| word.starts_with(stem)) {
                    words.push((s, -1));
                }
                start = None;
            }
            _ => {}
        }
    }
    words
}

/// Char offset of the first occurrence of `needle` in `haystack`,
/// case-insensitively.
fn find_ci(haystack: &str, needle_lower: &str) -> Option<usize> {
    let lower = haystack.to_lowercase();
    lower
        .find(needle_lower)
        .map(|byte_at| lower[..byte_at].chars().count())
}

/// Check explanation text against the payload's top-k entries.
pub fn verify_explanation(
    payload: &AttributionPayload,
    text: &str,
    top_k: usize,
) -> VerificationReport {
    let entries = payload.top_entries(top_k);
    let sentences = split_sentences(text);

    let mut features = Vec::with_capacity(entries.len());
    let mut mentioned = Vec::with_capacity(entries.len());
    let mut directional = Vec::with_capacity(entries.len());

    for entry in entries {
        features.push(entry.feature_name.clone());
        let name_lower = entry.feature_name.to_lowercase();
        let mentioning = sentences
            .iter()
            .find_map(|sentence| find_ci(sentence, &name_lower).map(|at| (*sentence, at)));
        mentioned.push(mentioning.is_some());

        let phi_sign = sign_of(entry.phi);
        let direction = match mentioning {
            None => Direction::Indeterminate,
            Some(_) if phi_sign == 0 => Direction::Indeterminate,
            Some((sentence, name_at)) => {
                let nearest = direction_words(sentence)
                    .into_iter()
                    .min_by_key(|(at, _)| at.abs_diff(name_at));
                match nearest {
                    None => Direction::Indeterminate,
                    Some((_, word_sign)) if word_sign == phi_sign => Direction::Consistent,
                    Some(_) => Direction::Contradicted,
                }
            }
        };
        directional.push(direction);
    }

    let coverage = if mentioned.is_empty() {
        1.0
    } else {
        mentioned.iter().filter(|&&m| m).count() as f64 / mentioned.len() as f64
    };

    VerificationReport {
        top_k: entries.len(),
        features,
        mentioned,
        directional_consistency: directional,
        coverage,
    }
}
