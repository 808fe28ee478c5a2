//! Dialogue benchmark files: a JSON array of
//! `{"img": "<target uri or id>", "dialog": ["<D0>", "<Q1>? <A1>", ...]}`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::EmbeddingIndex;
use crate::reformulate::QaTurn;

/// Question used for dialogue strings that contain no `?`.
pub const PLACEHOLDER_QUESTION: &str = "Anything else?";

/// One dataset record as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDialogue {
    pub img: String,
    pub dialog: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DialogueEntry {
    pub img: String,
    pub target_id: u64,
    pub initial_description: String,
    pub turns: Vec<QaTurn>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DialogueDataset {
    pub entries: Vec<DialogueEntry>,
}

impl DialogueDataset {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of question/answer turns per dialogue.
    pub fn turns(&self) -> usize {
        self.entries.first().map_or(0, |e| e.turns.len())
    }
}

/// Splits on the first `?`: the question keeps its `?`, the trimmed rest is
/// the answer. Strings without `?` become answers to a placeholder
/// question.
pub fn split_qa(s: &str) -> QaTurn {
    match s.find('?') {
        Some(i) => QaTurn {
            question: s[..=i].trim().to_owned(),
            answer: s[i + 1..].trim().to_owned(),
        },
        None => QaTurn {
            question: PLACEHOLDER_QUESTION.to_owned(),
            answer: s.trim().to_owned(),
        },
    }
}

fn resolve(img: &str, index: &EmbeddingIndex) -> Result<u64> {
    if let Some(id) = index.find_by_uri(img) {
        return Ok(id);
    }
    match img.parse::<u64>() {
        Ok(id) if index.position(id).is_some() => Ok(id),
        _ => Err(Error::UnknownTarget(img.to_owned())),
    }
}

pub fn parse_dataset(json: &str, index: &EmbeddingIndex) -> Result<DialogueDataset> {
    let raw: Vec<RawDialogue> =
        serde_json::from_str(json).map_err(|e| Error::Format(format!("dataset: {e}")))?;
    from_raw(raw, index)
}

pub fn from_raw(raw: Vec<RawDialogue>, index: &EmbeddingIndex) -> Result<DialogueDataset> {
    let mut entries = Vec::with_capacity(raw.len());
    for (i, r) in raw.into_iter().enumerate() {
        let Some((d0, rest)) = r.dialog.split_first() else {
            return Err(Error::Format(format!("entry {i} has an empty dialog")));
        };
        if d0.trim().is_empty() {
            return Err(Error::Format(format!("entry {i} has an empty initial description")));
        }
        let target_id = resolve(&r.img, index)?;
        entries.push(DialogueEntry {
            img: r.img,
            target_id,
            initial_description: d0.trim().to_owned(),
            turns: rest.iter().map(|s| split_qa(s)).collect(),
        });
    }
    if let Some(first) = entries.first() {
        let t = first.turns.len();
        if let Some((i, e)) = entries.iter().enumerate().find(|(_, e)| e.turns.len() != t) {
            return Err(Error::Format(format!(
                "entry {i} has {} turns, expected {t}",
                e.turns.len()
            )));
        }
    }
    Ok(DialogueDataset { entries })
}

pub fn load_dataset(path: impl AsRef<Path>, index: &EmbeddingIndex) -> Result<DialogueDataset> {
    parse_dataset(&std::fs::read_to_string(path)?, index)
}

pub fn save_raw_dataset(raw: &[RawDialogue], path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, serde_json::to_vec_pretty(raw)?)?;
    Ok(())
}
