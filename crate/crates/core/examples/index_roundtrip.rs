//! Builds a corpus index from a caption manifest, saves it in the
//! `DARIDX01` format, reloads it and queries it.
//!
//! ```text
//! cargo run --release -p dar-core --example index_roundtrip -- [captions=2000] [dim=128]
//! ```

use std::time::Instant;

use dar::backends::ReferenceConfig;
use dar::corpus::{build_from_manifest, load_manifest, save_manifest};
use dar::synthetic::{caption_corpus, manifest};
use dar::{Backends, EmbeddingIndex};

fn arg(i: usize, default: usize) -> usize {
    std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() -> dar::Result<()> {
    let (n, dim) = (arg(1, 2000), arg(2, 128));
    let dir = std::env::temp_dir().join(format!("dar-index-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let manifest_path = dir.join("corpus.jsonl");
    let index_path = dir.join("corpus.daridx");

    let captions = caption_corpus(n, 1);
    save_manifest(&manifest(&captions), &manifest_path)?;
    let backends = Backends::reference(dim, ReferenceConfig::default());

    let t = Instant::now();
    let index = build_from_manifest(&load_manifest(&manifest_path)?, &backends)?;
    println!("encoded {} captions at dim {} in {:.2?}", index.len(), index.dim(), t.elapsed());

    index.save(&index_path)?;
    let bytes = std::fs::metadata(&index_path)?.len();
    let t = Instant::now();
    let loaded = EmbeddingIndex::load(&index_path)?;
    println!("{} bytes on disk, reloaded in {:.2?}, identical: {}", bytes, t.elapsed(), loaded == index);

    let query_text = &captions[42].text;
    let query = backends.encode_text(query_text)?;
    let t = Instant::now();
    let top = loaded.top_k(&query, 5)?;
    println!("query: {query_text}\ntop-5 in {:.2?}:", t.elapsed());
    for r in &top {
        println!("  {:>5}  {:.4}  {}", r.id, r.score, captions[r.id as usize].text);
    }
    println!("rank of caption 42: {}", loaded.rank_of(&query, 42)?);

    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
