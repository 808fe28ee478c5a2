//! The retrieval dialogue state machine.
//!
//! Every turn runs the full pipeline: reformulate the dialogue, expand the
//! refined query into `K` diffusion prompts, generate and encode one image
//! per prompt, fuse the text and image embeddings with the turn's weights,
//! and rank the corpus. Turn 0 runs on the initial description alone.
//!
//! In evaluation mode the session knows its target and closes as soon as
//! the target ranks within `hit_k`; in live mode it stays open until the
//! user accepts an image or the turn limit is reached.

use std::sync::Arc;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backends::{Backends, GenerationRequest, ImageRef};
use crate::embedding::{fuse, l2_normalize, Aggregation, Embedding, FusionWeights, WeightSchedule};
use crate::error::{Error, Result};
use crate::hashing::generation_seed;
use crate::index::{EmbeddingIndex, RankedList};
use crate::reformulate::{
    build_question_prompt, concat_context, generate_prompts, reformulate_dialogue,
    truncate_to_budget, DialogueContext, PromptTemplates, ReformulateParams, ReformulationMethod,
    RefinedQuery,
};

/// Question used when the questioner LLM is unavailable.
pub const FALLBACK_QUESTION: &str = "Can you describe the image in more detail?";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    /// Generated images per turn (`K`); 0 disables generation.
    pub images_per_turn: usize,
    /// Maximum number of question/answer turns (`T`).
    pub max_turns: usize,
    /// Rank threshold counted as a hit.
    pub hit_k: usize,
    pub schedule: WeightSchedule,
    pub aggregation: Aggregation,
    pub reformulation: ReformulationMethod,
    pub llm: ReformulateParams,
    pub image_width: u32,
    pub image_height: u32,
    pub seed_base: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            images_per_turn: 3,
            max_turns: 10,
            hit_k: 10,
            schedule: WeightSchedule::default(),
            aggregation: Aggregation::Sum,
            reformulation: ReformulationMethod::R1,
            llm: ReformulateParams::default(),
            image_width: 512,
            image_height: 512,
            seed_base: 0,
        }
    }
}

impl SessionConfig {
    /// Text-only retrieval on the concatenated dialogue.
    pub fn concat_baseline(&self) -> Self {
        Self {
            images_per_turn: 0,
            reformulation: ReformulationMethod::Concat,
            schedule: WeightSchedule::constant(FusionWeights::text_only()),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_turns == 0 {
            return Err(Error::Config("max_turns must be at least 1".into()));
        }
        if self.hit_k == 0 {
            return Err(Error::Config("hit_k must be at least 1".into()));
        }
        if self.llm.token_budget == 0 {
            return Err(Error::Config("token_budget must be at least 1".into()));
        }
        if self.image_width == 0 || self.image_height == 0 {
            return Err(Error::Config("image size must be positive".into()));
        }
        if !(self.llm.r1_temperature >= 0.0 && self.llm.r2_temperature >= 0.0) {
            return Err(Error::Config("temperatures must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionStatus {
    Active,
    Hit,
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedImage {
    pub k: usize,
    pub prompt: String,
    pub seed: u64,
    pub image: ImageRef,
    /// Unit-normalized image embedding.
    pub embedding: Embedding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FailureStage {
    Generate,
    Encode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationFailure {
    pub k: usize,
    pub stage: FailureStage,
    pub message: String,
}

/// Everything computed during one turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub turn: usize,
    pub question: Option<String>,
    pub answer: Option<String>,
    pub refined_query: RefinedQuery,
    pub prompts: Vec<String>,
    /// Successful generations in prompt order.
    pub generated: Vec<GeneratedImage>,
    pub failures: Vec<GenerationFailure>,
    /// Unit-normalized embedding of the refined query.
    pub text_embedding: Embedding,
    pub weights: FusionWeights,
    pub fused: Embedding,
    /// Top `hit_k` candidates under `fused`.
    pub ranking: RankedList,
    pub target_rank: Option<usize>,
    pub hit: bool,
}

impl TurnRecord {
    pub fn image_embeddings(&self) -> Vec<Embedding> {
        self.generated.iter().map(|g| g.embedding.clone()).collect()
    }

    /// Recomputes the fused embedding from the stored components.
    pub fn recompute_fused(&self, aggregation: Aggregation) -> Result<Embedding> {
        fuse(
            &self.text_embedding,
            &self.image_embeddings(),
            self.weights,
            aggregation,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub id: String,
    pub config: SessionConfig,
    pub context: DialogueContext,
    pub records: Vec<TurnRecord>,
    pub status: SessionStatus,
    /// Known target in evaluation mode.
    pub target: Option<u64>,
    /// Image the user accepted in live mode.
    pub accepted: Option<u64>,
}

impl SessionState {
    pub fn latest(&self) -> Option<&TurnRecord> {
        self.records.last()
    }

    pub fn is_active(&self) -> bool {
        self.status == SessionStatus::Active
    }

    /// Transcript export: config plus every turn record, embeddings
    /// included.
    pub fn to_transcript(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_transcript(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }
}

/// Shared, immutable pipeline resources. Cheap to clone.
#[derive(Debug, Clone)]
pub struct DarEngine {
    index: Arc<EmbeddingIndex>,
    backends: Backends,
    templates: Arc<PromptTemplates>,
}

impl DarEngine {
    pub fn new(index: Arc<EmbeddingIndex>, backends: Backends) -> Result<Self> {
        Self::with_templates(index, backends, Arc::new(PromptTemplates::default()))
    }

    pub fn with_templates(
        index: Arc<EmbeddingIndex>,
        backends: Backends,
        templates: Arc<PromptTemplates>,
    ) -> Result<Self> {
        if index.dim() != backends.dim() {
            return Err(Error::DimMismatch {
                expected: index.dim(),
                found: backends.dim(),
            });
        }
        Ok(Self {
            index,
            backends,
            templates,
        })
    }

    pub fn index(&self) -> &Arc<EmbeddingIndex> {
        &self.index
    }

    pub fn backends(&self) -> &Backends {
        &self.backends
    }

    pub fn templates(&self) -> &PromptTemplates {
        &self.templates
    }

    /// Starts a session and immediately runs turn 0 on `d0`.
    pub fn create_session(
        &self,
        id: impl Into<String>,
        d0: &str,
        config: SessionConfig,
        target: Option<u64>,
    ) -> Result<SessionState> {
        config.validate()?;
        if self.index.is_empty() {
            return Err(Error::EmptyIndex);
        }
        if let Some(t) = target {
            if self.index.position(t).is_none() {
                return Err(Error::UnknownId(t));
            }
        }
        let mut state = SessionState {
            id: id.into(),
            config,
            context: DialogueContext::new(d0)?,
            records: Vec::new(),
            status: SessionStatus::Active,
            target,
            accepted: None,
        };
        let record = self.run_turn(&state, None)?;
        Self::push_record(&mut state, record);
        Ok(state)
    }

    /// Extends the dialogue by one question/answer pair and runs the turn.
    ///
    /// On error the session is left unchanged.
    pub fn submit_turn<'s>(
        &self,
        state: &'s mut SessionState,
        question: &str,
        answer: &str,
    ) -> Result<&'s TurnRecord> {
        match state.status {
            SessionStatus::Hit => return Err(Error::SessionClosed),
            _ if state.context.len() >= state.config.max_turns => {
                return Err(Error::TurnLimitExceeded(state.config.max_turns))
            }
            SessionStatus::Exhausted => return Err(Error::SessionClosed),
            SessionStatus::Active => {}
        }
        let record = self.run_turn(state, Some((question, answer)))?;
        state.context.push(question, answer);
        Self::push_record(state, record);
        Ok(state.records.last().expect("record just pushed"))
    }

    fn push_record(state: &mut SessionState, record: TurnRecord) {
        let hit = record.hit;
        state.records.push(record);
        if hit {
            state.status = SessionStatus::Hit;
        } else if state.context.len() >= state.config.max_turns {
            state.status = SessionStatus::Exhausted;
        }
    }

    /// Clarifying question for the next turn, from the current context.
    pub fn generate_question(&self, state: &SessionState) -> Result<String> {
        if !state.is_active() {
            return Err(Error::SessionClosed);
        }
        let prompt = build_question_prompt(&state.context, &self.templates);
        let question = self
            .backends
            .complete(&prompt, state.config.llm.r1_temperature, state.config.llm.max_tokens)
            .map(|raw| {
                raw.lines()
                    .map(str::trim)
                    .find(|l| !l.is_empty())
                    .unwrap_or_default()
                    .to_owned()
            });
        match question {
            Ok(q) if !q.is_empty() => Ok(q),
            Ok(_) => Ok(FALLBACK_QUESTION.to_owned()),
            Err(e) => {
                warn!("question generation failed: {e}");
                Ok(FALLBACK_QUESTION.to_owned())
            }
        }
    }

    pub fn current_ranking(&self, state: &SessionState, k: usize) -> Result<RankedList> {
        let last = state.latest().ok_or(Error::NoTurns)?;
        self.index.top_k(&last.fused, k)
    }

    /// The accepted image if the user accepted one, otherwise the top-1
    /// candidate under the latest fused embedding.
    pub fn finalize(&self, state: &SessionState) -> Result<u64> {
        if let Some(id) = state.accepted {
            return Ok(id);
        }
        self.current_ranking(state, 1)?
            .first()
            .map(|r| r.id)
            .ok_or(Error::EmptyIndex)
    }

    /// Live-mode acceptance: closes the session on `image_id`.
    pub fn accept(&self, state: &mut SessionState, image_id: u64) -> Result<()> {
        if !state.is_active() {
            return Err(Error::SessionClosed);
        }
        if self.index.position(image_id).is_none() {
            return Err(Error::UnknownId(image_id));
        }
        state.accepted = Some(image_id);
        state.status = SessionStatus::Hit;
        Ok(())
    }

    fn refine(&self, cfg: &SessionConfig, ctx: &DialogueContext) -> RefinedQuery {
        match cfg.reformulation {
            ReformulationMethod::R1 => {
                reformulate_dialogue(ctx, &self.backends, &self.templates, &cfg.llm)
            }
            ReformulationMethod::Concat => {
                let mut q = concat_context(ctx);
                q.text = truncate_to_budget(&q.text, cfg.llm.token_budget);
                q
            }
        }
    }

    fn generate_one(
        &self,
        cfg: &SessionConfig,
        session_id: &str,
        turn: usize,
        k: usize,
        prompt: &str,
    ) -> Result<GeneratedImage, GenerationFailure> {
        let seed = generation_seed(cfg.seed_base, session_id, turn, k);
        let fail = |stage, message: String| GenerationFailure { k, stage, message };
        let request = GenerationRequest::new(prompt, seed, cfg.image_width, cfg.image_height)
            .map_err(|e| fail(FailureStage::Generate, e.to_string()))?;
        let mut image = self
            .backends
            .generate_image(&request)
            .map_err(|e| fail(FailureStage::Generate, e.to_string()))?;
        let prov = image.provenance.get_or_insert_with(|| crate::backends::Provenance {
            prompt: prompt.to_owned(),
            seed,
            turn: None,
            k: None,
        });
        prov.turn = Some(turn);
        prov.k = Some(k);
        let embedding = self
            .backends
            .encode_image(&image)
            .map_err(|e| e.into())
            .and_then(|e| l2_normalize(&e))
            .map_err(|e: Error| fail(FailureStage::Encode, e.to_string()))?;
        Ok(GeneratedImage {
            k,
            prompt: prompt.to_owned(),
            seed,
            image,
            embedding,
        })
    }

    fn run_turn(&self, state: &SessionState, qa: Option<(&str, &str)>) -> Result<TurnRecord> {
        let cfg = &state.config;
        let mut ctx = state.context.clone();
        if let Some((q, a)) = qa {
            ctx.push(q, a);
        }
        let turn = ctx.len();

        let refined = self.refine(cfg, &ctx);
        let prompts = if cfg.images_per_turn > 0 {
            generate_prompts(&refined, cfg.images_per_turn, &self.backends, &self.templates, &cfg.llm)
                .prompts
        } else {
            Vec::new()
        };

        let outcomes: Vec<_> = prompts
            .par_iter()
            .enumerate()
            .map(|(i, p)| self.generate_one(cfg, &state.id, turn, i + 1, p))
            .collect();
        let mut generated = Vec::new();
        let mut failures = Vec::new();
        for outcome in outcomes {
            match outcome {
                Ok(g) => generated.push(g),
                Err(f) => {
                    warn!("session {} turn {turn} image {}: {}", state.id, f.k, f.message);
                    failures.push(f);
                }
            }
        }

        let text_embedding = l2_normalize(&self.backends.encode_text(&refined.text)?)?;
        let weights = cfg.schedule.weights_for(turn);
        let images: Vec<Embedding> = generated.iter().map(|g| g.embedding.clone()).collect();
        let fused = fuse(&text_embedding, &images, weights, cfg.aggregation)?;
        let ranking = self.index.top_k(&fused, cfg.hit_k)?;
        let target_rank = state
            .target
            .map(|t| self.index.rank_of(&fused, t))
            .transpose()?;
        let hit = target_rank.is_some_and(|r| r <= cfg.hit_k);

        Ok(TurnRecord {
            turn,
            question: qa.map(|(q, _)| q.to_owned()),
            answer: qa.map(|(_, a)| a.to_owned()),
            refined_query: refined,
            prompts,
            generated,
            failures,
            text_embedding,
            weights,
            fused,
            ranking,
            target_rank,
            hit,
        })
    }
}
