//! Editable prompt templates.
//!
//! A template is plain text with `{NAME}` placeholders, where `NAME`
//! matches `[A-Z][A-Z0-9_]*`. `{{` and `}}` produce literal braces. Any
//! other use of a brace is a parse error.
//!
//! | template          | placeholders         |
//! |-------------------|----------------------|
//! | `r1.txt`          | `{D0}`, `{TURNS}`    |
//! | `r2.txt`          | `{S_T}`, `{K_DIRECTIVE}` |
//! | `questioner.txt`  | `{D0}`, `{TURNS}`    |
//!
//! `directives.txt` and `styles.txt` hold one entry per line; blank lines
//! and lines starting with `#` are skipped.

use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};

/// Structural lines the reference LLM keys on. Custom templates that keep
/// these lines stay compatible with it.
pub mod markers {
    pub const TASK_REFORMULATE: &str = "[Task: dialogue-reformulation]";
    pub const TASK_DIFFUSION_PROMPT: &str = "[Task: diffusion-prompt]";
    pub const TASK_QUESTION: &str = "[Task: clarifying-question]";
    pub const INITIAL_QUERY: &str = "[Initial Query]";
    pub const QUERY: &str = "[Query]";
    pub const VARIATION: &str = "Variation:";
    pub const TURN_PREFIX: &str = "Turn ";
    pub const ANSWER_SEP: &str = "| A:";
    pub const NO_TURNS: &str = "(none)";
}

const DEFAULT_R1: &str = include_str!("../../resources/r1.txt");
const DEFAULT_R2: &str = include_str!("../../resources/r2.txt");
const DEFAULT_QUESTIONER: &str = include_str!("../../resources/questioner.txt");
const DEFAULT_DIRECTIVES: &str = include_str!("../../resources/directives.txt");
const DEFAULT_STYLES: &str = include_str!("../../resources/styles.txt");

#[derive(Debug, Clone, PartialEq, Eq)]
enum Part {
    Literal(String),
    Slot(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    parts: Vec<Part>,
}

impl Template {
    pub fn parse(src: &str) -> Result<Self> {
        let mut parts = Vec::new();
        let mut lit = String::new();
        let mut chars = src.char_indices().peekable();
        while let Some((i, c)) = chars.next() {
            match c {
                '{' if chars.peek().map(|p| p.1) == Some('{') => {
                    chars.next();
                    lit.push('{');
                }
                '}' if chars.peek().map(|p| p.1) == Some('}') => {
                    chars.next();
                    lit.push('}');
                }
                '{' => {
                    let mut name = String::new();
                    loop {
                        match chars.next() {
                            Some((_, '}')) => break,
                            Some((_, ch)) => name.push(ch),
                            None => {
                                return Err(Error::Template(format!(
                                    "unterminated placeholder at byte {i}"
                                )))
                            }
                        }
                    }
                    let valid = name.chars().next().is_some_and(|f| f.is_ascii_uppercase())
                        && name
                            .chars()
                            .all(|ch| ch.is_ascii_uppercase() || ch.is_ascii_digit() || ch == '_');
                    if !valid {
                        return Err(Error::Template(format!("invalid placeholder {{{name}}}")));
                    }
                    if !lit.is_empty() {
                        parts.push(Part::Literal(std::mem::take(&mut lit)));
                    }
                    parts.push(Part::Slot(name));
                }
                '}' => return Err(Error::Template(format!("stray '}}' at byte {i}"))),
                _ => lit.push(c),
            }
        }
        if !lit.is_empty() {
            parts.push(Part::Literal(lit));
        }
        Ok(Self { parts })
    }

    pub fn placeholders(&self) -> BTreeSet<&str> {
        self.parts
            .iter()
            .filter_map(|p| match p {
                Part::Slot(name) => Some(name.as_str()),
                Part::Literal(_) => None,
            })
            .collect()
    }

    fn expect_placeholders(self, what: &str, expected: &[&str]) -> Result<Self> {
        let found = self.placeholders();
        let expected: BTreeSet<&str> = expected.iter().copied().collect();
        if found != expected {
            return Err(Error::Template(format!(
                "{what} must use exactly the placeholders {expected:?}, found {found:?}"
            )));
        }
        Ok(self)
    }

    pub fn render(&self, values: &[(&str, &str)]) -> Result<String> {
        let mut out = String::new();
        for part in &self.parts {
            match part {
                Part::Literal(s) => out.push_str(s),
                Part::Slot(name) => {
                    let value = values
                        .iter()
                        .find(|(k, _)| k == name)
                        .map(|(_, v)| *v)
                        .ok_or_else(|| Error::Template(format!("no value for {{{name}}}")))?;
                    out.push_str(value);
                }
            }
        }
        Ok(out)
    }
}

fn list_lines(src: &str) -> Vec<String> {
    src.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect()
}

/// The full set of prompt resources used by reformulation and questioning.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    pub r1: Template,
    pub r2: Template,
    pub questioner: Template,
    pub directives: Vec<String>,
    pub styles: Vec<String>,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self::from_sources(
            DEFAULT_R1,
            DEFAULT_R2,
            DEFAULT_QUESTIONER,
            DEFAULT_DIRECTIVES,
            DEFAULT_STYLES,
        )
        .expect("built-in templates are valid")
    }
}

impl PromptTemplates {
    pub fn from_sources(
        r1: &str,
        r2: &str,
        questioner: &str,
        directives: &str,
        styles: &str,
    ) -> Result<Self> {
        let directives = list_lines(directives);
        let styles = list_lines(styles);
        if directives.is_empty() || styles.is_empty() {
            return Err(Error::Template("directive and style lists must not be empty".into()));
        }
        Ok(Self {
            r1: Template::parse(r1)?.expect_placeholders("r1", &["D0", "TURNS"])?,
            r2: Template::parse(r2)?.expect_placeholders("r2", &["S_T", "K_DIRECTIVE"])?,
            questioner: Template::parse(questioner)?
                .expect_placeholders("questioner", &["D0", "TURNS"])?,
            directives,
            styles,
        })
    }

    /// Loads overrides from `dir`; files that are absent keep the built-in
    /// version.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let read = |name: &str, default: &'static str| -> Result<String> {
            let path = dir.join(name);
            if path.exists() {
                Ok(std::fs::read_to_string(path)?)
            } else {
                Ok(default.to_owned())
            }
        };
        Self::from_sources(
            &read("r1.txt", DEFAULT_R1)?,
            &read("r2.txt", DEFAULT_R2)?,
            &read("questioner.txt", DEFAULT_QUESTIONER)?,
            &read("directives.txt", DEFAULT_DIRECTIVES)?,
            &read("styles.txt", DEFAULT_STYLES)?,
        )
    }

    /// Variation directive for the 1-based prompt index `k`. Indices beyond
    /// the list wrap around with an explicit variation number.
    pub fn directive(&self, k: usize) -> String {
        assert!(k >= 1, "prompt index is 1-based");
        let n = self.directives.len();
        let base = &self.directives[(k - 1) % n];
        if k > n {
            format!("{base} Make this variation number {k} distinct from the others.")
        } else {
            base.clone()
        }
    }

    pub fn style(&self, k: usize) -> &str {
        assert!(k >= 1, "prompt index is 1-based");
        &self.styles[(k - 1) % self.styles.len()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_render() {
        let t = Template::parse("a {X} b {{lit}} {Y_2}").unwrap();
        assert_eq!(t.placeholders().into_iter().collect::<Vec<_>>(), vec!["X", "Y_2"]);
        assert_eq!(t.render(&[("X", "1"), ("Y_2", "2")]).unwrap(), "a 1 b {lit} 2");
        assert!(t.render(&[("X", "1")]).is_err());
    }

    #[test]
    fn parse_errors() {
        assert!(Template::parse("a {x}").is_err());
        assert!(Template::parse("a {X").is_err());
        assert!(Template::parse("a } b").is_err());
        assert!(Template::parse("{}").is_err());
    }

    #[test]
    fn defaults_are_valid() {
        let t = PromptTemplates::default();
        assert_eq!(t.directives.len(), 5);
        assert_eq!(t.styles[0], "photorealistic");
        assert_ne!(t.directive(1), t.directive(2));
        assert_ne!(t.directive(1), t.directive(6));
        assert!(t.directive(6).starts_with(&t.directive(1)));
    }

    #[test]
    fn wrong_placeholders_rejected() {
        let err = PromptTemplates::from_sources("{D0}", DEFAULT_R2, DEFAULT_QUESTIONER, "a", "b");
        assert!(matches!(err, Err(Error::Template(_))));
    }

    #[test]
    fn load_dir_overrides() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("directives.txt"), "Bold: be bold\n").unwrap();
        let t = PromptTemplates::load_dir(dir.path()).unwrap();
        assert_eq!(t.directives, vec!["Bold: be bold".to_string()]);
        assert_eq!(t.r1, PromptTemplates::default().r1);
    }
}
