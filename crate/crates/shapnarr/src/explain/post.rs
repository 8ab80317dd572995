//! Mechanical cleanup of generated text.
//!
//! The pipeline, in order: strip surrounding whitespace, drop any leading
//! echo of the prompt, collapse blank-line runs, remove exactly-duplicated
//! consecutive sentences, and truncate at the last sentence boundary within
//! the character budget. The whole pipeline is idempotent and total; empty
//! input yields empty output.

/// Split text into sentences. A sentence ends at `.`, `!`, or `?`
/// (plus any immediately following closing quotes or brackets) when followed
/// by whitespace or the end of the text. Trailing unterminated text counts
/// as a final sentence.
pub(crate) fn split_sentences(text: &str) -> Vec<&str> {
    let bytes = text.as_bytes();
    let mut sentences = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < bytes.len() {
        if matches!(bytes[i], b'.' | b'!' | b'?') {
            let mut end = i + 1;
            while end < bytes.len() && matches!(bytes[end], b'"' | b'\'' | b')' | b']') {
                end += 1;
            }
            if end >= bytes.len() || bytes[end].is_ascii_whitespace() {
                let sentence = text[start..end].trim();
                if !sentence.is_empty() {
                    sentences.push(sentence);
                }
                start = end;
                i = end;
                continue;
            }
        }
        i += 1;
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        sentences.push(tail);
    }
    sentences
}

fn strip_prompt_echo<'a>(mut text: &'a str, prompt: &str) -> &'a str {
    let prompt = prompt.trim();
    if prompt.is_empty() {
        return text;
    }
    while text.starts_with(prompt) {
        text = text[prompt.len()..].trim_start();
    }
    text
}

/// Rebuild the text with canonical spacing: sentences within a paragraph
/// joined by one space, paragraphs separated by one blank line, consecutive
/// duplicate sentences dropped.
fn normalize_paragraphs(text: &str) -> String {
    let mut paragraphs: Vec<String> = Vec::new();
    for block in text.split("\n\n") {
        let mut kept: Vec<&str> = Vec::new();
        for sentence in split_sentences(block) {
            if kept.last() != Some(&sentence) {
                kept.push(sentence);
            }
        }
        if !kept.is_empty() {
            paragraphs.push(kept.join(" "));
        }
    }
    paragraphs.join("\n\n")
}

fn collapse_blank_lines(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut blank_run = 0;
    for line in text.lines() {
        if line.trim().is_empty() {
            blank_run += 1;
            continue;
        }
        if !out.is_empty() {
            out.push_str(if blank_run > 0 { "\n\n" } else { "\n" });
        }
        blank_run = 0;
        out.push_str(line.trim_end());
    }
    out
}

/// Truncate to the last sentence boundary at or before `max_chars`
/// characters. When not even the first sentence fits, cut hard at the
/// budget so the function stays total.
fn truncate_at_sentence(text: &str, max_chars: usize) -> String {
    if text.chars().count() <= max_chars {
        return text.to_string();
    }
    let mut kept = String::new();
    let mut kept_chars = 0;
    for sentence in split_sentences(text) {
        let sep = if kept.is_empty() { 0 } else { 1 };
        let len = sentence.chars().count();
        if kept_chars + sep + len > max_chars {
            break;
        }
        if sep == 1 {
            kept.push(' ');
        }
        kept.push_str(sentence);
        kept_chars += sep + len;
    }
    if kept.is_empty() {
        // No complete sentence fits.
        kept = text
            .chars()
            .take(max_chars)
            .collect::<String>()
            .trim_end()
            .to_string();
    }
    kept
}

/// Clean up raw generated text. `prompt`, when given, is used to recognize
/// and drop a leading echo of itself.
pub fn post_process(raw: &str, prompt: Option<&str>, max_chars: usize) -> String {
    let mut text = raw.trim();
    if let Some(prompt) = prompt {
        text = strip_prompt_echo(text, prompt);
    }
    let collapsed = collapse_blank_lines(text);
    let normalized = normalize_paragraphs(&collapsed);
    truncate_at_sentence(&normalized, max_chars)
}
