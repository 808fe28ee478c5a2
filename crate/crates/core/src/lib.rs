//! Training-free interactive text-to-image retrieval.
//!
//! A retrieval dialogue starts from a short description of a target image.
//! At every turn the dialogue is condensed into a search query by an LLM,
//! the query is expanded into several diffusion prompts, one image is
//! generated per prompt, and the query text and the generated images are
//! embedded and fused into a single vector that ranks the corpus by cosine
//! similarity.
//!
//! | module          | contents                                               |
//! |-----------------|--------------------------------------------------------|
//! | [`embedding`]   | vectors, cosine similarity, fusion and weight schedule |
//! | [`index`]       | exact top-k corpus search and the `DARIDX01` file format |
//! | [`corpus`]      | corpus manifests and index building                    |
//! | [`backends`]    | model-role traits, HTTP client, reference backends     |
//! | [`reformulate`] | dialogue and diffusion-prompt reformulation            |
//! | [`session`]     | the per-turn pipeline and session state                |
//! | [`eval`]        | dataset replay and cumulative Hits@k curves            |
//! | [`synthetic`]   | caption corpora and scripted dialogues                 |
//!
//! See the crate's `examples/` directory for runnable walkthroughs.

pub mod backends;
pub mod config;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod hashing;
pub mod index;
pub mod reformulate;
pub mod session;
pub mod synthetic;

pub use crate::backends::Backends;
pub use crate::config::DarConfig;
pub use crate::embedding::{
    cosine_similarity, fuse, l2_normalize, schedule_weights, Aggregation, Embedding,
    FusionWeights, WeightSchedule,
};
pub use crate::error::{BackendError, Error, Result};
pub use crate::index::{CorpusEntry, EmbeddingIndex, RankedItem, RankedList};
pub use crate::session::{DarEngine, SessionConfig, SessionState, SessionStatus, TurnRecord};
