//! Blocking HTTP client for a conforming model server.

use std::thread;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use log::{debug, warn};
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde::Serialize;

use super::wire::{
    CompleteRequest, CompleteResponse, EmbeddingResponse, EncodeTextRequest, GenerateRequest,
    ImagePayload, COMPLETE_PATH, ENCODE_IMAGE_PATH, ENCODE_TEXT_PATH, GENERATE_PATH,
};
use super::{
    BackendConfig, BackendResult, BackendRole, Completer, GenerationRequest, ImageEncoder,
    ImageGenerator, ImageRef, ImageSource, Provenance, TextEncoder,
};
use crate::embedding::Embedding;
use crate::error::{BackendError, Error, Result};

const RETRY_BACKOFF: Duration = Duration::from_millis(25);

/// One remote role. Retries timeouts, transport failures and 5xx
/// responses up to `retries` extra times; 4xx and schema violations fail
/// immediately.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    cfg: BackendConfig,
    role: BackendRole,
    expected_dim: Option<usize>,
    client: Client,
}

impl HttpBackend {
    pub fn new(cfg: BackendConfig, role: BackendRole, expected_dim: Option<usize>) -> Result<Self> {
        cfg.validate()?;
        let client = Client::builder()
            .timeout(Duration::from_millis(cfg.timeout_ms))
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        Ok(Self {
            cfg,
            role,
            expected_dim,
            client,
        })
    }

    pub fn role(&self) -> BackendRole {
        self.role
    }

    pub fn config(&self) -> &BackendConfig {
        &self.cfg
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.cfg.endpoint.trim_end_matches('/'), path)
    }

    fn post<B: Serialize, R: DeserializeOwned>(&self, path: &str, body: &B) -> BackendResult<R> {
        let url = self.url(path);
        let mut attempt = 0;
        loop {
            let err = match self.client.post(&url).json(body).send() {
                Ok(resp) if resp.status() == StatusCode::OK => {
                    let bytes = resp.bytes().map_err(|e| {
                        if e.is_timeout() {
                            BackendError::Timeout {
                                endpoint: url.clone(),
                            }
                        } else {
                            BackendError::MalformedResponse(e.to_string())
                        }
                    })?;
                    return serde_json::from_slice(&bytes)
                        .map_err(|e| BackendError::MalformedResponse(e.to_string()));
                }
                Ok(resp) => {
                    let status = resp.status();
                    let err = BackendError::BadStatus {
                        status: status.as_u16(),
                    };
                    if !status.is_server_error() {
                        return Err(err);
                    }
                    err
                }
                Err(e) if e.is_timeout() => BackendError::Timeout {
                    endpoint: url.clone(),
                },
                Err(e) => BackendError::Transport(e.to_string()),
            };
            if attempt >= self.cfg.retries {
                warn!("{:?} backend at {url} failed: {err}", self.role);
                return Err(err);
            }
            attempt += 1;
            debug!("{:?} backend at {url}: {err}; retry {attempt}", self.role);
            thread::sleep(RETRY_BACKOFF * attempt);
        }
    }

    fn embedding(&self, resp: EmbeddingResponse) -> BackendResult<Embedding> {
        if let Some(expected) = self.expected_dim {
            if resp.embedding.len() != expected {
                return Err(BackendError::DimMismatch {
                    expected,
                    found: resp.embedding.len(),
                });
            }
        }
        Embedding::new(resp.embedding).map_err(|e| BackendError::MalformedResponse(e.to_string()))
    }
}

impl TextEncoder for HttpBackend {
    fn encode_text(&self, text: &str) -> BackendResult<Embedding> {
        let resp = self.post(
            ENCODE_TEXT_PATH,
            &EncodeTextRequest {
                text: text.to_owned(),
            },
        )?;
        self.embedding(resp)
    }
}

impl ImageEncoder for HttpBackend {
    fn encode_image(&self, image: &ImageRef) -> BackendResult<Embedding> {
        let body = match &image.source {
            ImageSource::Inline { bytes, media_type } => ImagePayload::Inline {
                image_b64: B64.encode(bytes),
                media_type: media_type.clone(),
            },
            ImageSource::Uri { uri } => ImagePayload::Uri { uri: uri.clone() },
        };
        let resp = self.post(ENCODE_IMAGE_PATH, &body)?;
        self.embedding(resp)
    }
}

impl Completer for HttpBackend {
    fn complete(&self, prompt: &str, temperature: f64, max_tokens: u32) -> BackendResult<String> {
        let resp: CompleteResponse = self.post(
            COMPLETE_PATH,
            &CompleteRequest {
                prompt: prompt.to_owned(),
                temperature,
                max_tokens,
            },
        )?;
        if resp.text.trim().is_empty() {
            return Err(BackendError::EmptyCompletion);
        }
        Ok(resp.text)
    }
}

impl ImageGenerator for HttpBackend {
    fn generate(&self, req: &GenerationRequest) -> BackendResult<ImageRef> {
        let body: serde_json::Value = self.post(
            GENERATE_PATH,
            &GenerateRequest {
                prompt: req.prompt.clone(),
                seed: req.seed,
                width: req.width,
                height: req.height,
            },
        )?;
        let field = |name: &str| body.get(name).and_then(|v| v.as_str());
        let image = match (field("image_b64"), field("media_type"), field("uri")) {
            (Some(b64), Some(media_type), None) => {
                let bytes = B64
                    .decode(b64)
                    .map_err(|e| BackendError::MalformedResponse(format!("image_b64: {e}")))?;
                ImageRef::inline(bytes, media_type)
            }
            (None, None, Some(uri)) if !uri.is_empty() => ImageRef::uri(uri),
            _ => {
                return Err(BackendError::MalformedResponse(
                    "generate response must carry exactly one of image_b64+media_type or uri"
                        .into(),
                ))
            }
        };
        Ok(image.with_provenance(Provenance {
            prompt: req.prompt.clone(),
            seed: req.seed,
            turn: None,
            k: None,
        }))
    }
}
