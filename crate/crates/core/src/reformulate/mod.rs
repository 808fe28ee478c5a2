//! Query reformulation.
//!
//! Two LLM pipelines turn a dialogue into retrieval inputs: the dialogue
//! reformulation condenses the whole context into one search query, and
//! the diffusion-prompt reformulation expands that query into `K` distinct
//! generation prompts. Both degrade to deterministic fallbacks when the
//! LLM misbehaves, so they never fail.

pub mod templates;

use std::collections::HashSet;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backends::Backends;
use crate::error::{Error, Result};

pub use self::templates::{PromptTemplates, Template};
use self::templates::markers;

/// Separator used when concatenating dialogue elements.
pub const CONCAT_SEPARATOR: &str = ", ";

/// One clarifying question and the user's answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaTurn {
    pub question: String,
    pub answer: String,
}

/// The initial description followed by every question/answer pair so far.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueContext {
    initial_description: String,
    turns: Vec<QaTurn>,
}

impl DialogueContext {
    pub fn new(initial_description: impl Into<String>) -> Result<Self> {
        let initial_description = initial_description.into();
        if initial_description.trim().is_empty() {
            return Err(Error::InvalidInput("initial description is empty".into()));
        }
        Ok(Self {
            initial_description,
            turns: Vec::new(),
        })
    }

    pub fn with_turns<Q: Into<String>, A: Into<String>>(
        initial_description: impl Into<String>,
        turns: impl IntoIterator<Item = (Q, A)>,
    ) -> Result<Self> {
        let mut ctx = Self::new(initial_description)?;
        for (q, a) in turns {
            ctx.push(q, a);
        }
        Ok(ctx)
    }

    pub fn push(&mut self, question: impl Into<String>, answer: impl Into<String>) {
        self.turns.push(QaTurn {
            question: question.into(),
            answer: answer.into(),
        });
    }

    pub fn initial_description(&self) -> &str {
        &self.initial_description
    }

    pub fn turns(&self) -> &[QaTurn] {
        &self.turns
    }

    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReformulationMethod {
    R1,
    Concat,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinedQuery {
    pub text: String,
    pub source_turn: usize,
    pub method: ReformulationMethod,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSet {
    pub prompts: Vec<String>,
    pub source: RefinedQuery,
}

/// LLM sampling and token-budget settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReformulateParams {
    pub r1_temperature: f64,
    pub r2_temperature: f64,
    pub max_tokens: u32,
    /// Whitespace-token budget of the text encoder.
    pub token_budget: usize,
}

/// Token limit of CLIP-style text encoders.
pub const DEFAULT_TOKEN_BUDGET: usize = 77;

impl Default for ReformulateParams {
    fn default() -> Self {
        Self {
            r1_temperature: 0.0,
            r2_temperature: 0.7,
            max_tokens: 256,
            token_budget: DEFAULT_TOKEN_BUDGET,
        }
    }
}

/// Keeps the first `budget` whitespace-delimited tokens of `text`.
///
/// Text already within budget is returned unchanged; otherwise the kept
/// tokens are joined by single spaces.
pub fn truncate_to_budget(text: &str, budget: usize) -> String {
    assert!(budget >= 1, "token budget must be at least 1");
    let mut tokens = text.split_whitespace();
    let kept: Vec<&str> = tokens.by_ref().take(budget).collect();
    if tokens.next().is_none() {
        text.to_owned()
    } else {
        kept.join(" ")
    }
}

/// Collapses all whitespace runs (newlines included) into single spaces.
fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// `D0, Q1 A1, Q2 A2, ...` with empty elements skipped.
pub fn concat_context(c: &DialogueContext) -> RefinedQuery {
    let mut parts = vec![one_line(&c.initial_description)];
    for turn in &c.turns {
        let pair = one_line(&format!("{} {}", turn.question, turn.answer));
        if !pair.is_empty() {
            parts.push(pair);
        }
    }
    RefinedQuery {
        text: parts.join(CONCAT_SEPARATOR),
        source_turn: c.len(),
        method: ReformulationMethod::Concat,
    }
}

fn format_turns(c: &DialogueContext) -> String {
    if c.turns.is_empty() {
        return markers::NO_TURNS.to_owned();
    }
    c.turns
        .iter()
        .enumerate()
        .map(|(i, t)| {
            format!(
                "{}{} | Q: {} {} {}",
                markers::TURN_PREFIX,
                i + 1,
                one_line(&t.question),
                markers::ANSWER_SEP,
                one_line(&t.answer)
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn build_r1_prompt(c: &DialogueContext, templates: &PromptTemplates) -> String {
    templates
        .r1
        .render(&[
            ("D0", &one_line(&c.initial_description)),
            ("TURNS", &format_turns(c)),
        ])
        .expect("r1 placeholders are validated at load")
}

pub fn build_question_prompt(c: &DialogueContext, templates: &PromptTemplates) -> String {
    templates
        .questioner
        .render(&[
            ("D0", &one_line(&c.initial_description)),
            ("TURNS", &format_turns(c)),
        ])
        .expect("questioner placeholders are validated at load")
}

/// Diffusion-prompt request for the 1-based prompt index `k`.
///
/// # Panics
///
/// If `k == 0`.
pub fn build_r2_prompt(s: &RefinedQuery, k: usize, templates: &PromptTemplates) -> String {
    assert!(k >= 1, "prompt index is 1-based, got {k}");
    templates
        .r2
        .render(&[("S_T", &one_line(&s.text)), ("K_DIRECTIVE", &templates.directive(k))])
        .expect("r2 placeholders are validated at load")
}

/// First non-empty line of an LLM reply, without a leading label or
/// surrounding quotes.
fn clean_completion(raw: &str, label: &str) -> String {
    let line = raw.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
    let line = line.strip_prefix(label).unwrap_or(line).trim();
    let line = line
        .strip_prefix('"')
        .and_then(|l| l.strip_suffix('"'))
        .unwrap_or(line);
    one_line(line)
}

/// Dialogue reformulation; falls back to [`concat_context`] when the LLM
/// fails or returns nothing usable.
pub fn reformulate_dialogue(
    c: &DialogueContext,
    backends: &Backends,
    templates: &PromptTemplates,
    params: &ReformulateParams,
) -> RefinedQuery {
    let prompt = build_r1_prompt(c, templates);
    let text = match backends.complete(&prompt, params.r1_temperature, params.max_tokens) {
        Ok(raw) => clean_completion(&raw, "[New Query]:"),
        Err(e) => {
            warn!("dialogue reformulation failed, using concatenation: {e}");
            String::new()
        }
    };
    if text.is_empty() {
        let mut q = concat_context(c);
        q.text = truncate_to_budget(&q.text, params.token_budget);
        return q;
    }
    RefinedQuery {
        text: truncate_to_budget(&text, params.token_budget),
        source_turn: c.len(),
        method: ReformulationMethod::R1,
    }
}

/// Returns `base` tagged with a one-token variant marker, truncated so the
/// result stays within `budget` and is not in `seen`.
fn make_distinct(base: &str, k: usize, budget: usize, seen: &HashSet<String>) -> String {
    for n in 0.. {
        let tag = if n == 0 {
            format!("variant-{k}")
        } else {
            format!("variant-{k}-{n}")
        };
        let candidate = if budget >= 2 {
            format!("{} {tag}", truncate_to_budget(base, budget - 1))
        } else {
            tag
        };
        if !seen.contains(&candidate) {
            return candidate;
        }
    }
    unreachable!()
}

/// Produces `count` pairwise-distinct diffusion prompts for `s`.
///
/// Prompt `k` falls back to `"<s.text>, <style k>"` when its LLM call
/// fails; duplicates get a deterministic `variant-k` token.
pub fn generate_prompts(
    s: &RefinedQuery,
    count: usize,
    backends: &Backends,
    templates: &PromptTemplates,
    params: &ReformulateParams,
) -> PromptSet {
    let raw: Vec<String> = (1..=count)
        .into_par_iter()
        .map(|k| {
            let prompt = build_r2_prompt(s, k, templates);
            let text = match backends.complete(&prompt, params.r2_temperature, params.max_tokens) {
                Ok(raw) => clean_completion(&raw, "[Prompt]:"),
                Err(e) => {
                    warn!("diffusion prompt {k} failed, using fallback: {e}");
                    String::new()
                }
            };
            if text.is_empty() {
                format!("{}{CONCAT_SEPARATOR}{}", s.text, templates.style(k))
            } else {
                text
            }
        })
        .collect();

    let mut seen = HashSet::with_capacity(count);
    let mut prompts = Vec::with_capacity(count);
    for (i, text) in raw.into_iter().enumerate() {
        let mut p = truncate_to_budget(&text, params.token_budget);
        if seen.contains(&p) {
            p = make_distinct(&text, i + 1, params.token_budget, &seen);
        }
        seen.insert(p.clone());
        prompts.push(p);
    }
    PromptSet {
        prompts,
        source: s.clone(),
    }
}
