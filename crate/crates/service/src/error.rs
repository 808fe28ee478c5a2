use axum::extract::rejection::{JsonRejection, PathRejection, QueryRejection};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Body of every error response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorEnvelope {
    pub code: String,
    pub message: String,
    pub detail: Value,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub envelope: ErrorEnvelope,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            envelope: ErrorEnvelope {
                code: code.to_owned(),
                message: message.into(),
                detail: Value::Null,
            },
        }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.envelope.detail = detail;
        self
    }

    pub fn not_found(what: &str, id: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("{what} {id} not found"))
    }

    pub fn bad_request(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }
}

impl From<dar::Error> for ApiError {
    fn from(e: dar::Error) -> Self {
        use dar::Error::*;
        let status = match &e {
            UnknownId(_) | UnknownTarget(_) => StatusCode::NOT_FOUND,
            SessionClosed | TurnLimitExceeded(_) | NoTurns => StatusCode::CONFLICT,
            Backend(dar::BackendError::InvalidInput(_)) => StatusCode::UNPROCESSABLE_ENTITY,
            Backend(_) => StatusCode::BAD_GATEWAY,
            Io(_) | Csv(_) | EmptyIndex => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        let detail = match &e {
            Backend(b) => serde_json::json!({ "backend": format!("{b:?}") }),
            _ => Value::Null,
        };
        Self::new(status, e.code(), e.to_string()).with_detail(detail)
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        Self::bad_request("malformed_request", "request body is not valid JSON for this endpoint")
            .with_detail(Value::String(r.body_text()))
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> Self {
        Self::bad_request("malformed_request", "invalid query string")
            .with_detail(Value::String(r.body_text()))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.envelope)).into_response()
    }
}

pub type ApiResult<T> = Result<T, ApiError>;

impl From<PathRejection> for ApiError {
    fn from(r: PathRejection) -> Self {
        Self::bad_request("malformed_request", "invalid path parameter")
            .with_detail(Value::String(r.body_text()))
    }
}
