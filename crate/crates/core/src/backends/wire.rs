//! JSON bodies of the model-server protocol.
//!
//! | endpoint                | request                                   | response                        |
//! |-------------------------|-------------------------------------------|---------------------------------|
//! | `POST /v1/encode/text`  | `{"text"}`                                | `{"embedding": [f32]}`          |
//! | `POST /v1/encode/image` | `{"image_b64","media_type"}` or `{"uri"}` | `{"embedding": [f32]}`          |
//! | `POST /v1/complete`     | `{"prompt","temperature","max_tokens"}`   | `{"text"}`                      |
//! | `POST /v1/generate`     | `{"prompt","seed","width","height"}`      | `{"image_b64","media_type"}` or `{"uri"}` |

use serde::{Deserialize, Serialize};

pub const ENCODE_TEXT_PATH: &str = "/v1/encode/text";
pub const ENCODE_IMAGE_PATH: &str = "/v1/encode/image";
pub const COMPLETE_PATH: &str = "/v1/complete";
pub const GENERATE_PATH: &str = "/v1/generate";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeTextRequest {
    pub text: String,
}

/// Either inline base64 bytes or a URI.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ImagePayload {
    Inline { image_b64: String, media_type: String },
    Uri { uri: String },
}

pub type EncodeImageRequest = ImagePayload;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingResponse {
    pub embedding: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompleteRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompleteResponse {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub prompt: String,
    pub seed: u64,
    pub width: u32,
    pub height: u32,
}

pub type GenerateResponse = ImagePayload;
