//! Corpus manifests: the input of index building.
//!
//! A manifest is a JSON array, or JSON Lines, of records
//!
//! ```json
//! {"id": 7, "uri": "images/7.jpg", "embedding": [0.1, 0.3, ...]}
//! {"id": 8, "uri": "images/8.jpg", "caption": "a red car on a street"}
//! ```
//!
//! Records with an `embedding` are used as is. Records with a `caption`
//! are rendered by the configured generator (seeded by the record id) and
//! embedded by the image encoder, which with the reference backends yields
//! a synthetic corpus whose images are faithful to their captions.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backends::{Backends, GenerationRequest};
use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::index::{CorpusEntry, EmbeddingIndex};

/// Side length of rendered caption images.
pub const CAPTION_IMAGE_SIZE: u32 = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: u64,
    pub uri: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f32>>,
}

impl CorpusRecord {
    pub fn caption(id: u64, uri: impl Into<String>, caption: impl Into<String>) -> Self {
        Self {
            id,
            uri: uri.into(),
            caption: Some(caption.into()),
            embedding: None,
        }
    }
}

/// Parses a JSON array or JSON Lines manifest.
pub fn parse_manifest(src: &str) -> Result<Vec<CorpusRecord>> {
    if src.trim_start().starts_with('[') {
        return serde_json::from_str(src).map_err(|e| Error::Format(format!("manifest: {e}")));
    }
    src.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Format(format!("manifest line {}: {e}", i + 1)))
        })
        .collect()
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<CorpusRecord>> {
    parse_manifest(&std::fs::read_to_string(path)?)
}

/// Writes `records` as JSON Lines.
pub fn save_manifest(records: &[CorpusRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn embed_record(r: &CorpusRecord, backends: &Backends) -> Result<Embedding> {
    match (&r.embedding, &r.caption) {
        (Some(v), None) => Embedding::new(v.clone()),
        (None, Some(caption)) => {
            let req = GenerationRequest::new(caption, r.id, CAPTION_IMAGE_SIZE, CAPTION_IMAGE_SIZE)?;
            let image = backends.generate_image(&req)?;
            Ok(backends.encode_image(&image)?)
        }
        _ => Err(Error::Format(format!(
            "record {} needs exactly one of caption or embedding",
            r.id
        ))),
    }
}

/// Embeds every record and builds the index.
pub fn build_from_manifest(records: &[CorpusRecord], backends: &Backends) -> Result<EmbeddingIndex> {
    let entries: Result<Vec<CorpusEntry>> = records
        .par_iter()
        .map(|r| Ok(CorpusEntry::new(r.id, &r.uri, embed_record(r, backends)?)))
        .collect();
    EmbeddingIndex::build(backends.dim(), entries?)
}
