//! Instruction templates and the parsers that invert them.
//!
//! Two templates are supported. The text-only LM template conditions on the
//! candidate emotions, a precomputed caption and the flattened dialog:
//!
//! ```text
//! input:    <emotion>awe<emotion>fear<caption>a stormy sea
//!           <conversation> Q: what do you see? I feel
//! response: " awe because the waves look huge"
//! ```
//!
//! The LVLM template asks the model to pick from a numbered option list; the
//! `<image>` token is substituted by the inference engine:
//!
//! ```text
//! input:    <image>Please choose the most suitable emotion ... below.
//!           Emotion options: 1. awe 2. fear
//!
//!           Conversation:
//!           Q: what do you see?
//! response: Choice:awe
//!           Explanation: the waves look huge
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{DialogRecord, Speaker};

pub const LVLM_INSTRUCTION: &str = "Please choose the most suitable emotion and provide explanation according to the image above and conversation below.";

const LM_SEPARATOR: &str = " because ";
const CHOICE_MARKER: &str = "Choice:";
const EXPLANATION_MARKER: &str = "Explanation:";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("no candidate matches emotion span `{span}`")]
    NoMatch { span: String },
    #[error("emotion span `{span}` is ambiguous between {matches:?}")]
    Ambiguous { span: String, matches: Vec<String> },
    #[error("candidate list is empty")]
    NoCandidates,
    #[error("missing `{marker}` in model output")]
    MissingMarker { marker: &'static str },
    #[error("choice index {index} out of range for {count} candidates")]
    ChoiceOutOfRange { index: usize, count: usize },
    #[error("unknown {kind} `{value}`")]
    UnknownVariant { kind: &'static str, value: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseMode {
    #[default]
    Strict,
    Lenient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Template {
    Lm,
    Lvlm,
}

impl FromStr for ParseMode {
    type Err = PromptError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strict" => Ok(Self::Strict),
            "lenient" => Ok(Self::Lenient),
            _ => Err(PromptError::UnknownVariant {
                kind: "parse mode",
                value: s.to_string(),
            }),
        }
    }
}

impl FromStr for Template {
    type Err = PromptError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lm" => Ok(Self::Lm),
            "lvlm" => Ok(Self::Lvlm),
            _ => Err(PromptError::UnknownVariant {
                kind: "template",
                value: s.to_string(),
            }),
        }
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Lm => "lm",
            Self::Lvlm => "lvlm",
        })
    }
}

/// A rendered training example. External trainers mask `input` and compute
/// the loss on `response` only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptPair {
    #[serde(rename = "id")]
    pub record_id: String,
    #[serde(rename = "input")]
    pub input_text: String,
    #[serde(rename = "response")]
    pub response_text: String,
}

/// One line of raw model output waiting to be parsed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawOutput {
    pub id: String,
    pub model: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    #[serde(rename = "id")]
    pub record_id: String,
    #[serde(rename = "model")]
    pub model_id: String,
    pub emotion: String,
    pub explanation: String,
}

/// `Q: ...` / `A: ...` per turn, joined by single spaces.
pub fn flatten_dialog(record: &DialogRecord) -> String {
    let mut out = String::new();
    for (i, turn) in record.dialog.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(match turn.speaker {
            Speaker::Questioner => "Q: ",
            Speaker::Answerer => "A: ",
        });
        out.push_str(&turn.text);
    }
    out
}

pub fn render_lm_prompt(record: &DialogRecord) -> PromptPair {
    let mut input = String::new();
    for c in &record.emotion_candidates {
        input.push_str("<emotion>");
        input.push_str(c);
    }
    input.push_str("<caption>");
    input.push_str(&record.caption);
    input.push_str("\n<conversation> ");
    input.push_str(&flatten_dialog(record));
    input.push_str(" I feel");

    PromptPair {
        record_id: record.id.clone(),
        input_text: input,
        response_text: format!(
            " {}{LM_SEPARATOR}{}",
            record.label_emotion, record.explanation
        ),
    }
}

pub fn render_lvlm_prompt(record: &DialogRecord) -> PromptPair {
    let options = record
        .emotion_candidates
        .iter()
        .enumerate()
        .map(|(i, c)| format!("{}. {c}", i + 1))
        .collect::<Vec<_>>()
        .join(" ");
    let input = format!(
        "<image>{LVLM_INSTRUCTION}\nEmotion options: {options}\n\nConversation:\n{}",
        flatten_dialog(record)
    );
    PromptPair {
        record_id: record.id.clone(),
        input_text: input,
        response_text: format!(
            "{CHOICE_MARKER}{}\n{EXPLANATION_MARKER} {}",
            record.label_emotion, record.explanation
        ),
    }
}

pub fn render_prompt(record: &DialogRecord, template: Template) -> PromptPair {
    match template {
        Template::Lm => render_lm_prompt(record),
        Template::Lvlm => render_lvlm_prompt(record),
    }
}

fn canonical(s: &str) -> String {
    s.trim()
        .trim_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace())
        .to_lowercase()
}

/// Maps a free-form emotion span onto one of `candidates`.
///
/// Both sides are trimmed of whitespace and surrounding punctuation and
/// lower-cased. An exact match wins; otherwise the single candidate that is a
/// prefix of the span (or has the span as a prefix) is returned.
pub fn normalize_emotion(span: &str, candidates: &[String]) -> Result<String, PromptError> {
    if candidates.is_empty() {
        return Err(PromptError::NoCandidates);
    }
    let folded = canonical(span);
    if folded.is_empty() {
        return Err(PromptError::NoMatch {
            span: span.to_string(),
        });
    }
    let keyed: Vec<(String, &String)> = candidates.iter().map(|c| (canonical(c), c)).collect();

    let pick = |matches: Vec<&String>| match matches.as_slice() {
        [] => None,
        [one] => Some(Ok((*one).clone())),
        many => Some(Err(PromptError::Ambiguous {
            span: span.to_string(),
            matches: many.iter().map(|m| m.to_string()).collect(),
        })),
    };

    let exact = keyed
        .iter()
        .filter(|(k, _)| *k == folded)
        .map(|(_, c)| *c)
        .collect();
    if let Some(res) = pick(exact) {
        return res;
    }
    let prefix = keyed
        .iter()
        .filter(|(k, _)| !k.is_empty() && (folded.starts_with(k.as_str()) || k.starts_with(&folded)))
        .map(|(_, c)| *c)
        .collect();
    pick(prefix).unwrap_or_else(|| {
        Err(PromptError::NoMatch {
            span: span.to_string(),
        })
    })
}

/// Parses `"<emotion> because <explanation>"`, splitting on the first
/// separator.
pub fn parse_lm_response(
    text: &str,
    candidates: &[String],
    mode: ParseMode,
) -> Result<(String, String), PromptError> {
    let (span, explanation) = match text.find(LM_SEPARATOR) {
        Some(pos) => (&text[..pos], text[pos + LM_SEPARATOR.len()..].trim()),
        None => match mode {
            ParseMode::Strict => {
                return Err(PromptError::MissingMarker {
                    marker: LM_SEPARATOR,
                })
            }
            ParseMode::Lenient => (text, ""),
        },
    };
    let emotion = normalize_emotion(span, candidates)?;
    Ok((emotion, explanation.to_string()))
}

/// Parses `"Choice:<emotion>\nExplanation: <explanation>"`.
///
/// The choice may also be a 1-based index into `candidates`. In lenient mode
/// a missing `Choice:` falls back to the earliest candidate mentioned anywhere
/// in the text, and a missing `Explanation:` yields an empty explanation.
pub fn parse_lvlm_response(
    text: &str,
    candidates: &[String],
    mode: ParseMode,
) -> Result<(String, String), PromptError> {
    if candidates.is_empty() {
        return Err(PromptError::NoCandidates);
    }
    let explanation_at = text.find(EXPLANATION_MARKER);
    let explanation = match explanation_at {
        Some(pos) => text[pos + EXPLANATION_MARKER.len()..].trim().to_string(),
        None if mode == ParseMode::Lenient => String::new(),
        None => {
            return Err(PromptError::MissingMarker {
                marker: EXPLANATION_MARKER,
            })
        }
    };

    let emotion = match text.find(CHOICE_MARKER) {
        Some(pos) => {
            let rest = &text[pos + CHOICE_MARKER.len()..];
            let mut end = rest.find('\n').unwrap_or(rest.len());
            if let Some(e) = rest.find(EXPLANATION_MARKER) {
                end = end.min(e);
            }
            choice_to_emotion(&rest[..end], candidates)?
        }
        None => match mode {
            ParseMode::Strict => {
                return Err(PromptError::MissingMarker {
                    marker: CHOICE_MARKER,
                })
            }
            ParseMode::Lenient => {
                let head = explanation_at.map_or(text, |pos| &text[..pos]);
                scan_for_candidate(head, candidates)
                    .or_else(|| scan_for_candidate(text, candidates))
                    .ok_or_else(|| PromptError::NoMatch {
                        span: text.to_string(),
                    })?
            }
        },
    };
    Ok((emotion, explanation))
}

pub fn parse_response(
    text: &str,
    candidates: &[String],
    template: Template,
    mode: ParseMode,
) -> Result<(String, String), PromptError> {
    match template {
        Template::Lm => parse_lm_response(text, candidates, mode),
        Template::Lvlm => parse_lvlm_response(text, candidates, mode),
    }
}

fn choice_to_emotion(span: &str, candidates: &[String]) -> Result<String, PromptError> {
    let trimmed = span.trim().trim_end_matches(['.', ')']);
    if !trimmed.is_empty() && trimmed.bytes().all(|b| b.is_ascii_digit()) {
        let index: usize = trimmed.parse().unwrap_or(0);
        return match index.checked_sub(1).and_then(|i| candidates.get(i)) {
            Some(c) => Ok(c.clone()),
            None => Err(PromptError::ChoiceOutOfRange {
                index,
                count: candidates.len(),
            }),
        };
    }
    normalize_emotion(span, candidates)
}

/// Earliest case-insensitive occurrence of any candidate; at equal positions
/// the longer candidate wins.
fn scan_for_candidate(text: &str, candidates: &[String]) -> Option<String> {
    let hay = text.to_lowercase();
    candidates
        .iter()
        .filter_map(|c| {
            let needle = c.to_lowercase();
            hay.find(&needle).map(|pos| (pos, std::cmp::Reverse(needle.len()), c))
        })
        .min_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)))
        .map(|(_, _, c)| c.clone())
}
