//! Caption cleaning and sentence splitting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boilerplate openers emitted by the recaptioning model.
pub const DEFAULT_PREFIXES: [&str; 3] = [
    "This picture depicts:",
    "This picture shows:",
    "This picture demonstrates:",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawCaption {
    pub id: String,
    pub text: String,
}

/// A caption split into non-empty, single-line sentences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Caption {
    sentences: Vec<String>,
}

impl Caption {
    /// Panics when the invariants (non-empty, no empty or multi-line
    /// sentence) do not hold.
    pub fn new(sentences: Vec<String>) -> Self {
        assert!(!sentences.is_empty(), "caption needs a sentence");
        for s in &sentences {
            assert!(!s.trim().is_empty(), "empty sentence");
            assert!(!s.contains(['\n', '\r']), "sentence spans lines");
        }
        Self { sentences }
    }

    pub fn sentences(&self) -> &[String] {
        &self.sentences
    }

    pub fn first(&self) -> &str {
        &self.sentences[0]
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Case-insensitive `strip_prefix`.
fn strip_prefix_ci<'a>(text: &'a str, prefix: &str) -> Option<&'a str> {
    let mut chars = text.char_indices();
    for p in prefix.chars() {
        let (_, c) = chars.next()?;
        if !c.to_lowercase().eq(p.to_lowercase()) {
            return None;
        }
    }
    Some(chars.next().map_or("", |(i, _)| &text[i..]))
}

/// Removes at most one leading boilerplate prefix, then trims.
pub fn clean_caption<S: AsRef<str>>(raw: &RawCaption, prefixes: &[S]) -> Result<String> {
    let text = raw.text.trim_start();
    let stripped = prefixes
        .iter()
        .find_map(|p| strip_prefix_ci(text, p.as_ref()))
        .unwrap_or(text);
    let cleaned = stripped.trim();
    if cleaned.is_empty() {
        return Err(Error::EmptyCaption);
    }
    Ok(cleaned.to_string())
}

/// Splits after `.`, `!` or `?` when followed by whitespace or the end of
/// the text. Abbreviations are not special-cased. Line breaks inside a
/// sentence become spaces.
pub fn split_sentences(text: &str) -> Result<Caption> {
    let mut sentences = Vec::new();
    let mut current = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        current.push(if c == '\n' || c == '\r' { ' ' } else { c });
        let at_boundary = matches!(c, '.' | '!' | '?')
            && chars.peek().is_none_or(|n| n.is_whitespace());
        if at_boundary {
            push_sentence(&mut sentences, &mut current);
        }
    }
    push_sentence(&mut sentences, &mut current);
    if sentences.is_empty() {
        return Err(Error::EmptyCaption);
    }
    Ok(Caption { sentences })
}

fn push_sentence(out: &mut Vec<String>, current: &mut String) {
    let s = current.trim();
    if !s.is_empty() {
        out.push(s.to_string());
    }
    current.clear();
}

/// `clean_caption` followed by `split_sentences` with the default prefixes.
pub fn parse_caption(raw: &RawCaption) -> Result<Caption> {
    split_sentences(&clean_caption(raw, &DEFAULT_PREFIXES)?)
}
