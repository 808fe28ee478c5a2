//! Exact cosine search over the candidate image corpus.
//!
//! Corpus vectors are unit-normalized at insert, so a query is scored by a
//! single dot product divided by the query norm. Results are ordered by
//! descending score with ties broken by ascending id.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedding::{dot, dot_wide, l2_normalize, Embedding, ZERO_NORM_EPS};
use crate::error::{Error, Result};

pub const INDEX_MAGIC: &[u8; 8] = b"DARIDX01";
pub const INDEX_VERSION: u16 = 1;

const UNIT_NORM_TOL: f64 = 1e-5;

/// One candidate image.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEntry {
    pub id: u64,
    pub uri: String,
    pub embedding: Embedding,
}

impl CorpusEntry {
    pub fn new(id: u64, uri: impl Into<String>, embedding: Embedding) -> Self {
        Self {
            id,
            uri: uri.into(),
            embedding,
        }
    }
}

/// Borrowed view of a stored entry.
#[derive(Debug, Clone, Copy)]
pub struct EntryRef<'a> {
    pub id: u64,
    pub uri: &'a str,
    pub embedding: &'a [f32],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedItem {
    pub id: u64,
    pub score: f64,
}

pub type RankedList = Vec<RankedItem>;

/// Immutable corpus of unit-normalized embeddings sorted by id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingIndex {
    dim: usize,
    ids: Vec<u64>,
    uris: Vec<String>,
    // row-major, `ids.len() * dim`
    data: Vec<f32>,
}

/// Ordering key: greater is better.
#[derive(Debug, Clone, Copy)]
struct Scored {
    score: f64,
    id: u64,
}

impl PartialEq for Scored {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scored {}

impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scored {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.id.cmp(&self.id))
    }
}

impl EmbeddingIndex {
    /// Builds an index, normalizing every embedding and sorting by id.
    pub fn build(dim: usize, entries: impl IntoIterator<Item = CorpusEntry>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("index dimension must be positive".into()));
        }
        let mut rows: Vec<(u64, String, Embedding)> = Vec::new();
        for entry in entries {
            entry.embedding.ensure_dim(dim)?;
            if entry.uri.len() > u16::MAX as usize {
                return Err(Error::InvalidInput(format!(
                    "uri of entry {} exceeds {} bytes",
                    entry.id,
                    u16::MAX
                )));
            }
            let unit = l2_normalize(&entry.embedding)?;
            rows.push((entry.id, entry.uri, unit));
        }
        rows.sort_by_key(|r| r.0);
        if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::DuplicateId(w[0].0));
        }
        let mut index = Self {
            dim,
            ids: Vec::with_capacity(rows.len()),
            uris: Vec::with_capacity(rows.len()),
            data: Vec::with_capacity(rows.len() * dim),
        };
        for (id, uri, emb) in rows {
            index.ids.push(id);
            index.uris.push(uri);
            index.data.extend_from_slice(emb.as_slice());
        }
        Ok(index)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    fn row(&self, pos: usize) -> &[f32] {
        &self.data[pos * self.dim..(pos + 1) * self.dim]
    }

    pub fn entry_at(&self, pos: usize) -> EntryRef<'_> {
        EntryRef {
            id: self.ids[pos],
            uri: &self.uris[pos],
            embedding: self.row(pos),
        }
    }

    pub fn entries(&self) -> impl ExactSizeIterator<Item = EntryRef<'_>> + '_ {
        (0..self.len()).map(move |pos| self.entry_at(pos))
    }

    pub fn position(&self, id: u64) -> Option<usize> {
        self.ids.binary_search(&id).ok()
    }

    pub fn get(&self, id: u64) -> Option<EntryRef<'_>> {
        self.position(id).map(|pos| self.entry_at(pos))
    }

    pub fn find_by_uri(&self, uri: &str) -> Option<u64> {
        self.uris
            .iter()
            .position(|u| u == uri)
            .map(|pos| self.ids[pos])
    }

    /// Returns `1 / |query|` after validating the query.
    fn query_scale(&self, query: &Embedding) -> Result<f64> {
        query.ensure_dim(self.dim)?;
        let norm = query.norm();
        if norm < ZERO_NORM_EPS {
            return Err(Error::ZeroVector);
        }
        Ok(1.0 / norm)
    }

    #[inline]
    fn score_at(&self, pos: usize, q: &[f64], scale: f64) -> f64 {
        dot_wide(self.row(pos), q) * scale
    }

    /// The `min(k, N)` best entries for `query` by flat scan.
    pub fn top_k(&self, query: &Embedding, k: usize) -> Result<RankedList> {
        let scale = self.query_scale(query)?;
        let k = k.min(self.len());
        if k == 0 {
            return Ok(Vec::new());
        }
        let q: Vec<f64> = query.as_slice().iter().map(|&x| x as f64).collect();
        let mut heap: BinaryHeap<Reverse<Scored>> = BinaryHeap::with_capacity(k + 1);
        for pos in 0..self.len() {
            let cand = Scored {
                score: self.score_at(pos, &q, scale),
                id: self.ids[pos],
            };
            if heap.len() < k {
                heap.push(Reverse(cand));
            } else if let Some(Reverse(worst)) = heap.peek() {
                if cand > *worst {
                    heap.pop();
                    heap.push(Reverse(cand));
                }
            }
        }
        // into_sorted_vec on Reverse yields best first
        Ok(heap
            .into_sorted_vec()
            .into_iter()
            .map(|Reverse(s)| RankedItem {
                id: s.id,
                score: s.score,
            })
            .collect())
    }

    /// 1-based rank of `target_id` under the `top_k` ordering.
    pub fn rank_of(&self, query: &Embedding, target_id: u64) -> Result<usize> {
        let scale = self.query_scale(query)?;
        let target_pos = self.position(target_id).ok_or(Error::UnknownId(target_id))?;
        let q: Vec<f64> = query.as_slice().iter().map(|&x| x as f64).collect();
        let target = Scored {
            score: self.score_at(target_pos, &q, scale),
            id: target_id,
        };
        let better = (0..self.len())
            .filter(|&pos| {
                pos != target_pos
                    && Scored {
                        score: self.score_at(pos, &q, scale),
                        id: self.ids[pos],
                    } > target
            })
            .count();
        Ok(better + 1)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(INDEX_MAGIC)?;
        w.write_all(&INDEX_VERSION.to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.dim * 4);
        for pos in 0..self.len() {
            w.write_all(&self.ids[pos].to_le_bytes())?;
            let uri = self.uris[pos].as_bytes();
            w.write_all(&(uri.len() as u16).to_le_bytes())?;
            w.write_all(uri)?;
            buf.clear();
            for x in self.row(pos) {
                buf.extend_from_slice(&x.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != INDEX_MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = u16::from_le_bytes(r.array()?);
        if version != INDEX_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let dim = u32::from_le_bytes(r.array()?) as usize;
        if dim == 0 {
            return Err(Error::Format("zero dimension".into()));
        }
        let count = u64::from_le_bytes(r.array()?);
        // every record needs at least 10 header bytes plus the vector
        let min_record = 10u64 + 4 * dim as u64;
        if count.saturating_mul(min_record) > r.remaining() as u64 {
            return Err(Error::Format("truncated file".into()));
        }
        let count = count as usize;
        let mut index = Self {
            dim,
            ids: Vec::with_capacity(count),
            uris: Vec::with_capacity(count),
            data: Vec::with_capacity(count * dim),
        };
        for _ in 0..count {
            let id = u64::from_le_bytes(r.array()?);
            if index.ids.last().is_some_and(|&prev| prev >= id) {
                return Err(Error::Format(format!("ids not strictly ascending at {id}")));
            }
            let uri_len = u16::from_le_bytes(r.array()?) as usize;
            let uri = std::str::from_utf8(r.take(uri_len)?)
                .map_err(|_| Error::Format(format!("uri of entry {id} is not UTF-8")))?;
            let start = index.data.len();
            for chunk in r.take(4 * dim)?.chunks_exact(4) {
                let x = f32::from_le_bytes(chunk.try_into().unwrap());
                if !x.is_finite() {
                    return Err(Error::Format(format!("non-finite component in entry {id}")));
                }
                index.data.push(x);
            }
            let norm = dot(&index.data[start..], &index.data[start..]).sqrt();
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::Format(format!("entry {id} is not unit-norm ({norm})")));
            }
            index.ids.push(id);
            index.uris.push(uri.to_owned());
        }
        if r.remaining() != 0 {
            return Err(Error::Format(format!("{} trailing bytes", r.remaining())));
        }
        Ok(index)
    }
}

pub fn build_index(dim: usize, entries: impl IntoIterator<Item = CorpusEntry>) -> Result<EmbeddingIndex> {
    EmbeddingIndex::build(dim, entries)
}

pub fn top_k(ix: &EmbeddingIndex, query: &Embedding, k: usize) -> Result<RankedList> {
    ix.top_k(query, k)
}

pub fn rank_of(ix: &EmbeddingIndex, query: &Embedding, target_id: u64) -> Result<usize> {
    ix.rank_of(query, target_id)
}

pub fn save_index(ix: &EmbeddingIndex, path: impl AsRef<Path>) -> Result<()> {
    ix.save(path)
}

pub fn load_index(path: impl AsRef<Path>) -> Result<EmbeddingIndex> {
    EmbeddingIndex::load(path)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Format("truncated file".into()));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().unwrap())
    }
}
