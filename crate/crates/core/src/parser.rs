//! Structured plans from completion text.
//!
//! Manager completions carry a brace-delimited skill sequence such as
//! `{(S1) – (T1) – (P2) – (S2)}` followed by an explanation. Operator
//! completions carry numbered steps of the form
//! `(1) Description. Call the functionality "name" using the URL "url" ...`.

use std::io;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::registry::is_skill_code;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillPlan {
    pub steps: Vec<String>,
    #[serde(default)]
    pub explanation_lines: Vec<String>,
}

impl SkillPlan {
    pub fn new(steps: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            steps: steps.into_iter().map(Into::into).collect(),
            explanation_lines: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Explanation text attached to step `index`, without its `(CODE)` tag.
    ///
    /// The n-th explanation item tagged with a code is matched to the n-th
    /// occurrence of that code in the plan.
    pub fn explanation_for(&self, index: usize) -> Option<&str> {
        let code = self.steps.get(index)?;
        let occurrence = self.steps[..index].iter().filter(|c| *c == code).count();
        let tag = format!("({code})");
        self.explanation_lines
            .iter()
            .filter_map(|line| line.strip_prefix(&tag))
            .nth(occurrence)
            .map(|rest| rest.trim().trim_end_matches('.'))
    }

    /// Renders the sequence in the brace-and-dash form used by the prompts.
    pub fn sequence_text(&self) -> String {
        let inner = self
            .steps
            .iter()
            .map(|c| format!("({c})"))
            .collect::<Vec<_>>()
            .join(" – ");
        format!("{{{inner}}}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionStep {
    pub step: u32,
    pub description: String,
    pub action: String,
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("no brace-delimited skill sequence found")]
    NoSequence,
    #[error("empty skill sequence")]
    EmptySequence,
    #[error("invalid skill code token {0:?}")]
    BadToken(String),
    #[error("no functionality steps found")]
    NoSteps,
    #[error("missing step {0}")]
    MissingStep(u32),
    #[error("step numbers not increasing at step {0}")]
    NotIncreasing(u32),
    #[error("malformed steps json: {0}")]
    Json(String),
}

static BRACE_GROUP: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{([^{}]*)\}").unwrap());
static DASHES: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[-\u{2013}\u{2014}]").unwrap());
static EXPLANATION_ITEM: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\([A-Z]{1,3}[0-9]+\)").unwrap());
static FUNCTION_STEP: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r#"\((\d+)\)\s*([^()]*?)\.?\s*Call the functionality "([A-Za-z0-9_]+)" using the URL "([^"]+)""#,
    )
    .unwrap()
});

/// Extracts the skill sequence from the first `{...}` group of a manager
/// completion and collects the explanation items that follow it.
pub fn parse_skill_sequence(text: &str) -> Result<SkillPlan, ParseError> {
    let group = BRACE_GROUP.captures(text).ok_or(ParseError::NoSequence)?;
    let whole = group.get(0).expect("group 0 always present");
    let inner = &group[1];
    if inner.trim().is_empty() {
        return Err(ParseError::EmptySequence);
    }

    let mut steps = Vec::new();
    for raw in DASHES.split(inner) {
        let token = raw.trim();
        let code = token
            .strip_prefix('(')
            .and_then(|t| t.strip_suffix(')'))
            .unwrap_or(token)
            .trim();
        if !is_skill_code(code) {
            return Err(ParseError::BadToken(token.to_string()));
        }
        steps.push(code.to_string());
    }

    let rest = &text[whole.end()..];
    let explanation_lines = match rest.find("Explanation:") {
        Some(pos) => {
            let body = &rest[pos + "Explanation:".len()..];
            // a model that keeps generating starts a new example with "Input:"
            let body = body.find("Input:").map_or(body, |end| &body[..end]);
            split_explanation(body)
        }
        None => Vec::new(),
    };
    Ok(SkillPlan {
        steps,
        explanation_lines,
    })
}

fn split_explanation(body: &str) -> Vec<String> {
    let starts: Vec<usize> = EXPLANATION_ITEM.find_iter(body).map(|m| m.start()).collect();
    let mut bounds = Vec::with_capacity(starts.len() + 2);
    bounds.push(0);
    bounds.extend(starts);
    bounds.push(body.len());
    bounds
        .windows(2)
        .map(|w| body[w[0]..w[1]].trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

/// Parses numbered functionality steps from an operator completion.
pub fn parse_function_steps(text: &str) -> Result<Vec<FunctionStep>, ParseError> {
    let mut steps = Vec::new();
    for cap in FUNCTION_STEP.captures_iter(text) {
        // digits only; an overflow is treated as not increasing
        let step: u32 = cap[1].parse().unwrap_or(u32::MAX);
        steps.push(FunctionStep {
            step,
            description: cap[2].trim().to_string(),
            action: cap[3].to_string(),
            url: cap[4].to_string(),
        });
    }
    if steps.is_empty() {
        return Err(ParseError::NoSteps);
    }
    check_numbering(&steps)?;
    Ok(steps)
}

fn check_numbering(steps: &[FunctionStep]) -> Result<(), ParseError> {
    for (expected, s) in (1u32..).zip(steps) {
        if s.step < expected {
            return Err(ParseError::NotIncreasing(s.step));
        }
        if s.step > expected {
            return Err(ParseError::MissingStep(expected));
        }
    }
    Ok(())
}

/// JSON formatter that separates items with `", "` and keys from values with
/// `": "`, the compact-but-spaced layout of the golden step arrays.
struct SpacedFormatter;

impl serde_json::ser::Formatter for SpacedFormatter {
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        if first {
            Ok(())
        } else {
            w.write_all(b", ")
        }
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        if first {
            Ok(())
        } else {
            w.write_all(b", ")
        }
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        w.write_all(b": ")
    }
}

/// Serializes steps as a JSON array whose objects carry the keys `step`,
/// `description`, `action`, `url` in that order.
pub fn steps_to_json(steps: &[FunctionStep]) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SpacedFormatter);
    steps
        .serialize(&mut ser)
        .expect("serializing plain structs cannot fail");
    String::from_utf8(buf).expect("serde_json emits utf-8")
}

/// Reads a step array produced by [`steps_to_json`] (or any equivalent JSON).
pub fn steps_from_json(text: &str) -> Result<Vec<FunctionStep>, ParseError> {
    let steps: Vec<FunctionStep> =
        serde_json::from_str(text).map_err(|e| ParseError::Json(e.to_string()))?;
    if !steps.is_empty() {
        check_numbering(&steps)?;
    }
    Ok(steps)
}
