//! Clients for the four external model roles: text encoder, image encoder,
//! LLM completer and image generator.
//!
//! Every role is a trait so the session engine can run against a remote
//! model server ([`http`]) or the deterministic in-process stand-ins in
//! [`reference`].

pub mod http;
pub mod reference;
pub mod wire;

use std::sync::Arc;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::embedding::Embedding;
use crate::error::{BackendError, Error, Result};

pub use self::http::HttpBackend;
pub use self::reference::{
    EchoGenerator, EchoImageEncoder, HashEncoder, TemplateLlm, Unavailable, ECHO_MEDIA_TYPE,
};

pub type BackendResult<T> = std::result::Result<T, BackendError>;

pub trait TextEncoder: Send + Sync {
    fn encode_text(&self, text: &str) -> BackendResult<Embedding>;
}

pub trait ImageEncoder: Send + Sync {
    fn encode_image(&self, image: &ImageRef) -> BackendResult<Embedding>;
}

pub trait Completer: Send + Sync {
    fn complete(&self, prompt: &str, temperature: f64, max_tokens: u32) -> BackendResult<String>;
}

pub trait ImageGenerator: Send + Sync {
    fn generate(&self, request: &GenerationRequest) -> BackendResult<ImageRef>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendRole {
    TextEncoder,
    ImageEncoder,
    Llm,
    Generator,
}

/// Where the bytes of an image live.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ImageSource {
    Inline {
        #[serde(rename = "image_b64", with = "b64")]
        bytes: Vec<u8>,
        media_type: String,
    },
    Uri {
        uri: String,
    },
}

/// How a generated image came to be.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub prompt: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turn: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRef {
    #[serde(flatten)]
    pub source: ImageSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl ImageRef {
    pub fn inline(bytes: Vec<u8>, media_type: impl Into<String>) -> Self {
        Self {
            source: ImageSource::Inline {
                bytes,
                media_type: media_type.into(),
            },
            provenance: None,
        }
    }

    pub fn uri(uri: impl Into<String>) -> Self {
        Self {
            source: ImageSource::Uri { uri: uri.into() },
            provenance: None,
        }
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = Some(provenance);
        self
    }
}

mod b64 {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&B64.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        B64.decode(s.as_bytes()).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub seed: u64,
    pub width: u32,
    pub height: u32,
}

impl GenerationRequest {
    pub fn new(prompt: impl Into<String>, seed: u64, width: u32, height: u32) -> Result<Self> {
        let prompt = prompt.into();
        if prompt.trim().is_empty() {
            return Err(Error::InvalidInput("generation prompt is empty".into()));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput("image size must be positive".into()));
        }
        Ok(Self {
            prompt,
            seed,
            width,
            height,
        })
    }
}

/// Connection settings for one remote backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    /// Base URL; the role's path (e.g. `/v1/encode/text`) is appended.
    pub endpoint: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// Additional attempts after the first one.
    #[serde(default = "default_retries")]
    pub retries: u32,
}

pub const MAX_RETRIES: u32 = 5;

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_retries() -> u32 {
    2
}

impl BackendConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            timeout_ms: default_timeout_ms(),
            retries: default_retries(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.timeout_ms == 0 {
            return Err(Error::Config("backend timeout must be positive".into()));
        }
        if self.retries > MAX_RETRIES {
            return Err(Error::Config(format!(
                "backend retries must be <= {MAX_RETRIES}"
            )));
        }
        if !(self.endpoint.starts_with("http://") || self.endpoint.starts_with("https://")) {
            return Err(Error::Config(format!(
                "backend endpoint {:?} is not an http(s) URL",
                self.endpoint
            )));
        }
        Ok(())
    }
}

/// Which implementation backs a role.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendSpec {
    #[default]
    Reference,
    Http(BackendConfig),
    /// Always fails; useful for exercising degradation paths.
    Failing,
}

/// Parameters shared by the reference backends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReferenceConfig {
    pub seed: u64,
    /// Relative noise the echo image encoder adds to generated images.
    pub sigma: f64,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            sigma: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendsConfig {
    pub dim: usize,
    pub reference: ReferenceConfig,
    pub text_encoder: BackendSpec,
    pub image_encoder: BackendSpec,
    pub llm: BackendSpec,
    pub generator: BackendSpec,
}

impl Default for BackendsConfig {
    fn default() -> Self {
        Self {
            dim: 512,
            reference: ReferenceConfig::default(),
            text_encoder: BackendSpec::Reference,
            image_encoder: BackendSpec::Reference,
            llm: BackendSpec::Reference,
            generator: BackendSpec::Reference,
        }
    }
}

/// The four model roles wired together, with a fixed embedding dimension.
#[derive(Clone)]
pub struct Backends {
    dim: usize,
    pub text_encoder: Arc<dyn TextEncoder>,
    pub image_encoder: Arc<dyn ImageEncoder>,
    pub llm: Arc<dyn Completer>,
    pub generator: Arc<dyn ImageGenerator>,
}

impl std::fmt::Debug for Backends {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Backends").field("dim", &self.dim).finish_non_exhaustive()
    }
}

impl Backends {
    pub fn new(
        dim: usize,
        text_encoder: Arc<dyn TextEncoder>,
        image_encoder: Arc<dyn ImageEncoder>,
        llm: Arc<dyn Completer>,
        generator: Arc<dyn ImageGenerator>,
    ) -> Self {
        Self {
            dim,
            text_encoder,
            image_encoder,
            llm,
            generator,
        }
    }

    /// All four roles served by the deterministic reference backends.
    pub fn reference(dim: usize, cfg: ReferenceConfig) -> Self {
        let hash = HashEncoder::new(dim, cfg.seed);
        Self {
            dim,
            text_encoder: Arc::new(hash.clone()),
            image_encoder: Arc::new(EchoImageEncoder::new(hash, cfg.sigma, cfg.seed)),
            llm: Arc::new(TemplateLlm::new()),
            generator: Arc::new(EchoGenerator),
        }
    }

    pub fn from_config(cfg: &BackendsConfig) -> Result<Self> {
        if cfg.dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        let reference = Self::reference(cfg.dim, cfg.reference);
        let http = |spec: &BackendConfig, role| -> Result<Arc<HttpBackend>> {
            Ok(Arc::new(HttpBackend::new(spec.clone(), role, Some(cfg.dim))?))
        };
        let failing = Arc::new(Unavailable);
        let text_encoder: Arc<dyn TextEncoder> = match &cfg.text_encoder {
            BackendSpec::Reference => reference.text_encoder.clone(),
            BackendSpec::Http(c) => http(c, BackendRole::TextEncoder)?,
            BackendSpec::Failing => failing.clone(),
        };
        let image_encoder: Arc<dyn ImageEncoder> = match &cfg.image_encoder {
            BackendSpec::Reference => reference.image_encoder.clone(),
            BackendSpec::Http(c) => http(c, BackendRole::ImageEncoder)?,
            BackendSpec::Failing => failing.clone(),
        };
        let llm: Arc<dyn Completer> = match &cfg.llm {
            BackendSpec::Reference => reference.llm.clone(),
            BackendSpec::Http(c) => http(c, BackendRole::Llm)?,
            BackendSpec::Failing => failing.clone(),
        };
        let generator: Arc<dyn ImageGenerator> = match &cfg.generator {
            BackendSpec::Reference => reference.generator.clone(),
            BackendSpec::Http(c) => http(c, BackendRole::Generator)?,
            BackendSpec::Failing => failing.clone(),
        };
        Ok(Self::new(cfg.dim, text_encoder, image_encoder, llm, generator))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn with_generator(mut self, generator: Arc<dyn ImageGenerator>) -> Self {
        self.generator = generator;
        self
    }

    pub fn with_llm(mut self, llm: Arc<dyn Completer>) -> Self {
        self.llm = llm;
        self
    }

    fn check_dim(&self, e: Embedding) -> BackendResult<Embedding> {
        if e.dim() != self.dim {
            return Err(BackendError::DimMismatch {
                expected: self.dim,
                found: e.dim(),
            });
        }
        Ok(e)
    }

    pub fn encode_text(&self, text: &str) -> BackendResult<Embedding> {
        if text.trim().is_empty() {
            return Err(BackendError::InvalidInput("text is empty".into()));
        }
        self.check_dim(self.text_encoder.encode_text(text)?)
    }

    pub fn encode_image(&self, image: &ImageRef) -> BackendResult<Embedding> {
        self.check_dim(self.image_encoder.encode_image(image)?)
    }

    pub fn complete(&self, prompt: &str, temperature: f64, max_tokens: u32) -> BackendResult<String> {
        if prompt.trim().is_empty() {
            return Err(BackendError::InvalidInput("prompt is empty".into()));
        }
        if !(temperature >= 0.0) {
            return Err(BackendError::InvalidInput("temperature must be >= 0".into()));
        }
        let text = self.llm.complete(prompt, temperature, max_tokens)?;
        if text.trim().is_empty() {
            return Err(BackendError::EmptyCompletion);
        }
        Ok(text)
    }

    pub fn generate_image(&self, request: &GenerationRequest) -> BackendResult<ImageRef> {
        self.generator.generate(request)
    }
}
