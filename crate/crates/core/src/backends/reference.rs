//! Deterministic in-process backends.
//!
//! * [`HashEncoder`] feature-hashes lowercase alphanumeric tokens: each
//!   token `w` gets `h = splitmix64(fnv1a_64(seed_le ++ w))`, adds
//!   `+1` (bit 63 of `h` clear) or `-1` (set) to component `h mod d`, and
//!   the result is L2-normalized. Texts sharing vocabulary get correlated
//!   embeddings.
//! * [`EchoGenerator`] produces an "image" artifact that carries its prompt
//!   verbatim; [`EchoImageEncoder`] recovers the prompt, hash-embeds it and
//!   adds seeded Gaussian noise of relative magnitude `sigma`.
//! * [`TemplateLlm`] answers the three shipped prompt templates with fixed
//!   rules.
//! * [`Unavailable`] fails every call.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{
    BackendResult, Completer, GenerationRequest, ImageEncoder, ImageGenerator, ImageRef,
    ImageSource, Provenance, TextEncoder,
};
use crate::embedding::{Embedding, ZERO_NORM_EPS};
use crate::error::BackendError;
use crate::hashing::seeded_hash;
use crate::reformulate::templates::markers;

pub const ECHO_MEDIA_TYPE: &str = "application/x-dar-echo";
const ECHO_MAGIC: &[u8; 8] = b"DARECHO1";

#[derive(Debug, Clone)]
pub struct HashEncoder {
    dim: usize,
    seed: u64,
}

impl HashEncoder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "dimension must be positive");
        Self { dim, seed }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embed(&self, text: &str) -> BackendResult<Embedding> {
        let lower = text.to_lowercase();
        let mut acc = vec![0.0f64; self.dim];
        let mut tokens = 0usize;
        for token in lower.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
            let h = seeded_hash(self.seed, token.as_bytes());
            let bucket = (h % self.dim as u64) as usize;
            acc[bucket] += if h >> 63 == 0 { 1.0 } else { -1.0 };
            tokens += 1;
        }
        if tokens == 0 {
            return Err(BackendError::InvalidInput(format!(
                "no alphanumeric tokens in {text:?}"
            )));
        }
        unit_f32(acc).ok_or_else(|| {
            BackendError::InvalidInput(format!("token hashes of {text:?} cancel out"))
        })
    }
}

impl TextEncoder for HashEncoder {
    fn encode_text(&self, text: &str) -> BackendResult<Embedding> {
        self.embed(text)
    }
}

fn unit_f32(v: Vec<f64>) -> Option<Embedding> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < ZERO_NORM_EPS {
        return None;
    }
    Embedding::new(v.into_iter().map(|x| (x / norm) as f32).collect()).ok()
}

/// Decoded contents of an echo artifact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EchoArtifact {
    pub prompt: String,
    pub seed: u64,
    pub width: u32,
    pub height: u32,
}

impl EchoArtifact {
    /// `DARECHO1`, seed u64 LE, width u32 LE, height u32 LE, prompt UTF-8.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + self.prompt.len());
        out.extend_from_slice(ECHO_MAGIC);
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(self.prompt.as_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Option<Self> {
        if bytes.len() < 24 || &bytes[..8] != ECHO_MAGIC {
            return None;
        }
        Some(Self {
            seed: u64::from_le_bytes(bytes[8..16].try_into().ok()?),
            width: u32::from_le_bytes(bytes[16..20].try_into().ok()?),
            height: u32::from_le_bytes(bytes[20..24].try_into().ok()?),
            prompt: String::from_utf8(bytes[24..].to_vec()).ok()?,
        })
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EchoGenerator;

impl ImageGenerator for EchoGenerator {
    fn generate(&self, req: &GenerationRequest) -> BackendResult<ImageRef> {
        let artifact = EchoArtifact {
            prompt: req.prompt.clone(),
            seed: req.seed,
            width: req.width,
            height: req.height,
        };
        Ok(ImageRef::inline(artifact.encode(), ECHO_MEDIA_TYPE).with_provenance(Provenance {
            prompt: req.prompt.clone(),
            seed: req.seed,
            turn: None,
            k: None,
        }))
    }
}

/// Encodes echo artifacts as `normalize(hash(prompt) + sigma * z / sqrt(d))`
/// where `z` is standard normal, drawn component by component from
/// ChaCha8 seeded with `artifact.seed ^ noise_seed`.
#[derive(Debug, Clone)]
pub struct EchoImageEncoder {
    hash: HashEncoder,
    sigma: f64,
    noise_seed: u64,
}

impl EchoImageEncoder {
    pub fn new(hash: HashEncoder, sigma: f64, noise_seed: u64) -> Self {
        assert!(sigma >= 0.0 && sigma.is_finite(), "sigma must be finite and >= 0");
        Self {
            hash,
            sigma,
            noise_seed,
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn encode_artifact(&self, artifact: &EchoArtifact) -> BackendResult<Embedding> {
        let base = self.hash.embed(&artifact.prompt)?;
        if self.sigma == 0.0 {
            return Ok(base);
        }
        let dim = base.dim();
        let scale = self.sigma / (dim as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(artifact.seed ^ self.noise_seed);
        let noisy = base
            .as_slice()
            .iter()
            .map(|&x| {
                let z: f64 = StandardNormal.sample(&mut rng);
                x as f64 + scale * z
            })
            .collect();
        unit_f32(noisy).ok_or_else(|| BackendError::MalformedResponse("noisy embedding vanished".into()))
    }
}

impl ImageEncoder for EchoImageEncoder {
    fn encode_image(&self, image: &ImageRef) -> BackendResult<Embedding> {
        match &image.source {
            ImageSource::Inline { bytes, .. } => {
                let artifact = EchoArtifact::decode(bytes).ok_or_else(|| {
                    BackendError::MalformedResponse("not an echo artifact".into())
                })?;
                self.encode_artifact(&artifact)
            }
            ImageSource::Uri { uri } => Err(BackendError::InvalidInput(format!(
                "echo encoder cannot fetch {uri}"
            ))),
        }
    }
}

/// Rule-based stand-in for an instruction-following LLM.
///
/// * dialogue reformulation: the initial query followed by every non-empty
///   answer, joined by `", "`;
/// * diffusion prompt: `"<modifier> <query>. Style: photorealistic."` where
///   the modifier is the lowercased first word of the variation directive;
/// * clarifying question: entry `n mod len` of a fixed question bank, with
///   `n` the number of turns so far.
///
/// Prompts without a recognised task marker yield `EmptyCompletion`.
#[derive(Debug, Clone)]
pub struct TemplateLlm {
    questions: Vec<String>,
}

pub const QUESTION_BANK: &[&str] = &[
    "What color is the main subject?",
    "Where is the scene taking place?",
    "What is the main subject doing?",
    "What can you see in the background?",
    "Are there any other objects near the subject?",
    "What time of day does it look like?",
    "What is the weather like?",
    "Are there any people in the picture?",
    "What is the main subject made of?",
    "Is there anything unusual about the picture?",
];

impl Default for TemplateLlm {
    fn default() -> Self {
        Self::new()
    }
}

impl TemplateLlm {
    pub fn new() -> Self {
        Self::with_questions(QUESTION_BANK.iter().map(|s| s.to_string()).collect())
    }

    pub fn with_questions(questions: Vec<String>) -> Self {
        assert!(!questions.is_empty(), "question bank is empty");
        Self { questions }
    }

    fn line_after<'a>(lines: &[&'a str], header: &str) -> Option<&'a str> {
        let pos = lines.iter().position(|l| l.trim() == header)?;
        lines.get(pos + 1).map(|l| l.trim())
    }

    fn turn_lines<'a, 'b>(lines: &'b [&'a str]) -> impl Iterator<Item = &'a str> + 'b {
        lines
            .iter()
            .map(|l| l.trim())
            .filter(|l| l.starts_with(markers::TURN_PREFIX))
    }

    fn reformulate(lines: &[&str]) -> Option<String> {
        let d0 = Self::line_after(lines, markers::INITIAL_QUERY)?;
        let mut parts = vec![d0.to_string()];
        for line in Self::turn_lines(lines) {
            if let Some((_, answer)) = line.split_once(markers::ANSWER_SEP) {
                let answer = answer.trim();
                if !answer.is_empty() {
                    parts.push(answer.to_string());
                }
            }
        }
        Some(parts.join(", "))
    }

    fn diffusion_prompt(lines: &[&str]) -> Option<String> {
        let query = Self::line_after(lines, markers::QUERY)?;
        let directive = lines
            .iter()
            .find_map(|l| l.trim().strip_prefix(markers::VARIATION))?
            .trim();
        let modifier: String = directive
            .split(|c: char| !c.is_alphanumeric())
            .find(|w| !w.is_empty())?
            .to_lowercase();
        let query = query.trim_end_matches(['.', ' ']);
        Some(format!("{modifier} {query}. Style: photorealistic."))
    }

    fn question(&self, lines: &[&str]) -> String {
        let n = Self::turn_lines(lines).count();
        self.questions[n % self.questions.len()].clone()
    }
}

impl Completer for TemplateLlm {
    fn complete(&self, prompt: &str, _temperature: f64, _max_tokens: u32) -> BackendResult<String> {
        let lines: Vec<&str> = prompt.lines().collect();
        let task = lines.first().map(|l| l.trim()).unwrap_or_default();
        let out = match task {
            markers::TASK_REFORMULATE => Self::reformulate(&lines),
            markers::TASK_DIFFUSION_PROMPT => Self::diffusion_prompt(&lines),
            markers::TASK_QUESTION => Some(self.question(&lines)),
            _ => None,
        };
        match out {
            Some(text) if !text.trim().is_empty() => Ok(text),
            _ => Err(BackendError::EmptyCompletion),
        }
    }
}

/// Fails every call with [`BackendError::Unavailable`].
#[derive(Debug, Clone, Copy, Default)]
pub struct Unavailable;

impl Unavailable {
    fn err<T>() -> BackendResult<T> {
        Err(BackendError::Unavailable("backend disabled".into()))
    }
}

impl TextEncoder for Unavailable {
    fn encode_text(&self, _: &str) -> BackendResult<Embedding> {
        Self::err()
    }
}

impl ImageEncoder for Unavailable {
    fn encode_image(&self, _: &ImageRef) -> BackendResult<Embedding> {
        Self::err()
    }
}

impl Completer for Unavailable {
    fn complete(&self, _: &str, _: f64, _: u32) -> BackendResult<String> {
        Self::err()
    }
}

impl ImageGenerator for Unavailable {
    fn generate(&self, _: &GenerationRequest) -> BackendResult<ImageRef> {
        Self::err()
    }
}
