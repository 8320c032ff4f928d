use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};

use isomatrix_core::analytics::AnalyticsError;
use isomatrix_core::classifier::{ClassifyError, ErrorKind};
use isomatrix_core::model::ModelError;
use isomatrix_core::{PipelineError, StoreError};

/// Machine-readable error codes returned in [`ApiError`] bodies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    /// Malformed body, query or parameter values.
    Validation,
    NotFound,
    /// A review does not match the assessment it targets.
    ReviewMismatch,
    /// An analysis needs data the store does not hold yet.
    EmptyCorpus,
    /// Another process holds the writer lock, or the store is read-only.
    WriterLocked,
    BackendFailure,
    Internal,
}

impl ErrorCode {
    pub fn status(self) -> StatusCode {
        match self {
            ErrorCode::Validation | ErrorCode::ReviewMismatch | ErrorCode::EmptyCorpus => StatusCode::BAD_REQUEST,
            ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::WriterLocked => StatusCode::CONFLICT,
            ErrorCode::BackendFailure => StatusCode::BAD_GATEWAY,
            ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub status: u16,
    pub code: ErrorCode,
    pub message: String,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ApiError {
            status: code.status().as_u16(),
            code,
            message: message.into(),
        }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::Validation, message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::NotFound, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

impl From<ClassifyError> for ApiError {
    fn from(e: ClassifyError) -> Self {
        let code = match e.kind {
            ErrorKind::InvalidInput => ErrorCode::Validation,
            _ => ErrorCode::BackendFailure,
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let message = e.to_string();
        let code = match &e {
            PipelineError::Store(StoreError::NotFound { .. }) => ErrorCode::NotFound,
            PipelineError::Store(StoreError::Locked(_) | StoreError::ReadOnly) => ErrorCode::WriterLocked,
            PipelineError::Store(_) => ErrorCode::Internal,
            PipelineError::Model(ModelError::ReviewMismatch(_)) => ErrorCode::ReviewMismatch,
            PipelineError::Analytics(AnalyticsError::EmptyCorpus(_) | AnalyticsError::NoDatapoints) => {
                ErrorCode::EmptyCorpus
            }
            PipelineError::Classify(c) => return ApiError::from(c.clone()),
            PipelineError::Ingest(_) | PipelineError::Model(_) | PipelineError::Report(_) | PipelineError::Invalid(_) => {
                ErrorCode::Validation
            }
        };
        ApiError::new(code, message)
    }
}

impl From<serde_json::Error> for ApiError {
    fn from(e: serde_json::Error) -> Self {
        ApiError::validation(format!("invalid JSON body: {e}"))
    }
}
