use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use fieldkit_core::prescription::PrescriptionError;
use fieldkit_core::zonal::ZonalError;
use serde_json::json;

/// Every failed request is answered with `{"error": name, "detail": text}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub error: String,
    pub detail: String,
}

impl ApiError {
    pub fn new(status: StatusCode, error: impl Into<String>, detail: impl Into<String>) -> Self {
        Self {
            status,
            error: error.into(),
            detail: detail.into(),
        }
    }

    pub fn bad_request(error: &str, detail: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, error, detail)
    }

    pub fn unknown_layer(id: &str) -> Self {
        Self::new(
            StatusCode::NOT_FOUND,
            "UnknownLayer",
            format!("no layer with id {id:?}"),
        )
    }

    pub fn missing_parameter(name: &str) -> Self {
        Self::bad_request(
            "MissingParameter",
            format!("query parameter {name:?} is required"),
        )
    }

    pub fn bad_parameter(name: &str, value: &str, expected: &str) -> Self {
        Self::bad_request(
            "BadParameter",
            format!("query parameter {name}={value:?}: expected {expected}"),
        )
    }

    pub fn internal(detail: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "InternalError", detail)
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} ({}): {}",
            self.error,
            self.status.as_u16(),
            self.detail
        )
    }
}

impl std::error::Error for ApiError {}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Json(json!({ "error": self.error, "detail": self.detail }));
        (self.status, body).into_response()
    }
}

impl From<ZonalError> for ApiError {
    fn from(e: ZonalError) -> Self {
        let status = match e {
            ZonalError::CrsMismatch { .. } => StatusCode::CONFLICT,
            _ => StatusCode::BAD_REQUEST,
        };
        Self::new(status, e.name(), e.to_string())
    }
}

impl From<PrescriptionError> for ApiError {
    fn from(e: PrescriptionError) -> Self {
        let status = match e {
            PrescriptionError::CrsMismatch { .. } => StatusCode::CONFLICT,
            _ => StatusCode::BAD_REQUEST,
        };
        Self::new(status, e.name(), e.to_string())
    }
}
