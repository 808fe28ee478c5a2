#![allow(dead_code)]

pub mod fake_server;

use std::sync::Arc;

use dar::backends::{Backends, ReferenceConfig};
use dar::eval::dataset::from_raw;
use dar::eval::DialogueDataset;
use dar::synthetic::{build_caption_index, caption_corpus, scripted_dialogues, DialogueScript};
use dar::{DarEngine, EmbeddingIndex};

/// Reference backends, a caption index and scripted dialogues over it.
pub struct Fixture {
    pub backends: Backends,
    pub index: Arc<EmbeddingIndex>,
    pub dataset: DialogueDataset,
}

impl Fixture {
    pub fn new(dim: usize, captions: usize, dialogues: usize, turns: usize, seed: u64, sigma: f64) -> Self {
        let backends = Backends::reference(dim, ReferenceConfig { seed, sigma });
        let corpus = caption_corpus(captions, seed);
        let index = Arc::new(build_caption_index(&corpus, &backends).unwrap());
        let raw = scripted_dialogues(
            &corpus,
            DialogueScript {
                dialogues,
                turns,
                uninformative_rate: 0.2,
                seed: seed.wrapping_add(1),
            },
        );
        let dataset = from_raw(raw, &index).unwrap();
        Self {
            backends,
            index,
            dataset,
        }
    }

    pub fn engine(&self) -> DarEngine {
        DarEngine::new(self.index.clone(), self.backends.clone()).unwrap()
    }
}
