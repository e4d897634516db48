//! Parsers for the fixed reply grammar.
//!
//! ```text
//! reply       = [fence] functions-line {blank-line} [analysis] [fence]
//! functions   = "Functions:" ws "[" name {"," name} "]"
//! analysis    = "Analysis:" text {newline text}
//! descriptors = "Category:" text newline "Description:" text
//! ```
//!
//! Tolerated: surrounding whitespace, one surrounding ``` fence (with or
//! without a language tag), and any casing of the labels. Anything else,
//! such as chatter before the functions line, is a [`FormatError`]. The full
//! grammar is documented in `docs/reply-grammar.md`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The model's structured reply: chosen function names and its analysis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedResponse {
    pub functions: Vec<String>,
    pub analysis: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectDescriptor {
    pub category: String,
    pub description: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[error("format error: {reason}")]
pub struct FormatError {
    pub reason: FormatReason,
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormatReason {
    #[error("missing functions line")]
    MissingFunctionsLine,
    #[error("unbalanced brackets")]
    UnbalancedBrackets,
    #[error("empty function list")]
    EmptyList,
    #[error("empty function name")]
    EmptyName,
    #[error("text after the function list")]
    TrailingText,
    #[error("unexpected text between functions and analysis")]
    UnexpectedText,
    #[error("missing category line")]
    MissingCategory,
    #[error("missing description line")]
    MissingDescription,
    #[error("empty category")]
    EmptyCategory,
    #[error("empty description")]
    EmptyDescription,
}

impl From<FormatReason> for FormatError {
    fn from(reason: FormatReason) -> Self {
        FormatError { reason }
    }
}

/// Removes one surrounding code fence, if present.
fn strip_fence(text: &str) -> &str {
    let trimmed = text.trim();
    let Some(rest) = trimmed.strip_prefix("```") else {
        return trimmed;
    };
    let Some(body) = rest.strip_suffix("```") else {
        return trimmed;
    };
    // Drop the optional language tag on the opening line.
    let is_tag = |s: &str| {
        s.chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '+'))
    };
    match body.find('\n') {
        Some(nl) if is_tag(body[..nl].trim()) => body[nl + 1..].trim(),
        _ => body.trim(),
    }
}

/// Case-insensitive `label:` prefix; returns the rest of the line.
fn strip_label<'a>(line: &'a str, label: &str) -> Option<&'a str> {
    let line = line.trim_start();
    let head = line.get(..label.len())?;
    if !head.eq_ignore_ascii_case(label) {
        return None;
    }
    line[label.len()..].trim_start().strip_prefix(':')
}

pub fn parse_invocation(text: &str) -> Result<ParsedResponse, FormatError> {
    let body = strip_fence(text);
    let mut lines = body.lines();
    let first = lines
        .by_ref()
        .find(|l| !l.trim().is_empty())
        .ok_or(FormatReason::MissingFunctionsLine)?;
    let list = strip_label(first, "functions").ok_or(FormatReason::MissingFunctionsLine)?;
    let functions = parse_list(list)?;

    let mut analysis = String::new();
    for line in lines.by_ref() {
        if line.trim().is_empty() {
            continue;
        }
        let rest = strip_label(line, "analysis").ok_or(FormatReason::UnexpectedText)?;
        analysis.push_str(rest);
        break;
    }
    for line in lines {
        analysis.push('\n');
        analysis.push_str(line);
    }
    Ok(ParsedResponse {
        functions,
        analysis: analysis.trim().to_string(),
    })
}

fn parse_list(list: &str) -> Result<Vec<String>, FormatError> {
    let list = list.trim();
    let inner = list.strip_prefix('[').ok_or(FormatReason::UnbalancedBrackets)?;
    let close = inner.find(']').ok_or(FormatReason::UnbalancedBrackets)?;
    let (items, tail) = (&inner[..close], &inner[close + 1..]);
    if items.contains('[') || tail.contains(']') || tail.contains('[') {
        return Err(FormatReason::UnbalancedBrackets.into());
    }
    if !tail.trim().is_empty() {
        return Err(FormatReason::TrailingText.into());
    }
    if items.trim().is_empty() {
        return Err(FormatReason::EmptyList.into());
    }
    items
        .split(',')
        .map(|name| {
            let name = name.trim();
            if name.is_empty() {
                Err(FormatReason::EmptyName.into())
            } else {
                Ok(name.to_string())
            }
        })
        .collect()
}

/// Lossy UTF-8 entry point for arbitrary bytes.
pub fn parse_invocation_bytes(bytes: &[u8]) -> Result<ParsedResponse, FormatError> {
    parse_invocation(&String::from_utf8_lossy(bytes))
}

/// Emits the canonical form of the reply grammar.
pub fn render_canonical(response: &ParsedResponse) -> String {
    format!(
        "Functions: [{}]\nAnalysis: {}",
        response.functions.join(", "),
        response.analysis
    )
}

pub fn parse_object_descriptors(text: &str) -> Result<ObjectDescriptor, FormatError> {
    let body = strip_fence(text);
    let mut category = None;
    let mut description = None;
    for line in body.lines() {
        if category.is_none() {
            if let Some(rest) = strip_label(line, "category") {
                category = Some(rest.trim());
                continue;
            }
        }
        if description.is_none() {
            if let Some(rest) = strip_label(line, "description") {
                description = Some(rest.trim());
            }
        }
    }
    let category = category.ok_or(FormatReason::MissingCategory)?;
    let description = description.ok_or(FormatReason::MissingDescription)?;
    if category.is_empty() {
        return Err(FormatReason::EmptyCategory.into());
    }
    if description.is_empty() {
        return Err(FormatReason::EmptyDescription.into());
    }
    Ok(ObjectDescriptor {
        category: category.to_string(),
        description: description.to_string(),
    })
}

pub fn render_descriptor(descriptor: &ObjectDescriptor) -> String {
    format!(
        "Category: {}\nDescription: {}",
        descriptor.category, descriptor.description
    )
}
