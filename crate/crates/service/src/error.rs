use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use serde_json::{json, Value};

use liveia_core::optics::OpticsError;
use liveia_core::radiance::RadianceError;
use liveia_core::render::RenderError;
use liveia_core::scene::{DocumentError, SceneError};
use liveia_core::waves::WaveError;
use liveia_store::StoreError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    NotFound,
    Validation,
    Version,
    Internal,
}

impl ErrorCode {
    pub fn status(self) -> StatusCode {
        match self {
            ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::Validation => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorCode::Version => StatusCode::CONFLICT,
            ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

/// Error envelope returned by every failing route.
#[derive(Debug, Clone, Serialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    pub detail: Value,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ApiError { code, message: message.into(), detail: Value::Null }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = detail;
        self
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::NotFound, message)
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::Validation, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::Internal, message)
    }

    /// True when the failure came from unparseable input rather than from a
    /// well-formed document breaking a rule.
    pub fn is_malformed(&self) -> bool {
        matches!(self.detail.get("document_code").and_then(Value::as_str), Some("MALFORMED" | "MALFORMED_NUMBER"))
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for ApiError {}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.code.status(), Json(self)).into_response()
    }
}

impl From<DocumentError> for ApiError {
    fn from(e: DocumentError) -> Self {
        let mut detail = json!({ "document_code": e.code.as_str() });
        if !e.violations.is_empty() {
            detail["violations"] = json!(e.violations);
        }
        ApiError::validation(e.to_string()).with_detail(detail)
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(_) => ApiError::not_found(e.to_string()),
            StoreError::Invalid(v) => {
                ApiError::validation("scenario is invalid").with_detail(json!({ "violations": v }))
            }
            StoreError::InvalidArgument(_) => ApiError::validation(e.to_string()),
            StoreError::Frozen(_) => ApiError::new(ErrorCode::Version, e.to_string()),
            StoreError::Document(d) => d.into(),
            StoreError::Corrupt { .. } | StoreError::Io(_) => ApiError::internal(e.to_string()),
        }
    }
}

impl From<SceneError> for ApiError {
    fn from(e: SceneError) -> Self {
        match e {
            SceneError::UnknownSphere(_) | SceneError::UnknownBeam(_) => ApiError::not_found(e.to_string()),
            SceneError::Invalid(v) => {
                ApiError::validation("scenario is invalid").with_detail(json!({ "violations": v }))
            }
            SceneError::InvalidArgument(_) => ApiError::validation(e.to_string()),
        }
    }
}

impl From<OpticsError> for ApiError {
    fn from(e: OpticsError) -> Self {
        match e {
            OpticsError::InvalidScene(v) => {
                ApiError::validation("scenario is invalid").with_detail(json!({ "violations": v }))
            }
            OpticsError::ContractViolation(_) | OpticsError::Validation(_) | OpticsError::IndexOutOfRange { .. } => {
                ApiError::validation(e.to_string())
            }
            OpticsError::NonFinite(_) => ApiError::internal(e.to_string()),
        }
    }
}

impl From<RadianceError> for ApiError {
    fn from(e: RadianceError) -> Self {
        match e {
            RadianceError::UnknownSphere(_) => ApiError::not_found(e.to_string()),
            RadianceError::InvalidParams(_) => ApiError::validation(e.to_string()),
            RadianceError::EmptyInterior => ApiError::internal(e.to_string()),
            RadianceError::Optics(o) => o.into(),
        }
    }
}

impl From<RenderError> for ApiError {
    fn from(e: RenderError) -> Self {
        match e {
            RenderError::Optics(o) => o.into(),
            RenderError::Scene(s) => s.into(),
        }
    }
}

impl From<WaveError> for ApiError {
    fn from(e: WaveError) -> Self {
        ApiError::validation(e.to_string())
    }
}
