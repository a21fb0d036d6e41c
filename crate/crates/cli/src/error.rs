use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use serde::Serialize;
use serde_json::Value;
use themeloom_workbench::{ConsensusError, StoreError, WorkflowError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadRequest,
    NotFound,
    Conflict,
    ProviderError,
    Integrity,
}

impl ErrorCode {
    pub fn status(self) -> StatusCode {
        match self {
            ErrorCode::BadRequest => StatusCode::BAD_REQUEST,
            ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::Conflict => StatusCode::CONFLICT,
            ErrorCode::ProviderError => StatusCode::BAD_GATEWAY,
            ErrorCode::Integrity => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

/// Body of every failed API response.
#[derive(Debug, Clone, Serialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    #[serde(skip_serializing_if = "Value::is_null")]
    pub detail: Value,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self { code, message: message.into(), detail: Value::Null }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::BadRequest, message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::NotFound, message)
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = detail;
        self
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let code = match &e {
            StoreError::NotFound { .. } => ErrorCode::NotFound,
            StoreError::Conflict(_) | StoreError::Locked(_) | StoreError::NoCorpus | StoreError::NoCodebook => ErrorCode::Conflict,
            StoreError::NotEmpty(_) | StoreError::NotAProject(_) => ErrorCode::BadRequest,
            StoreError::Integrity(_) | StoreError::Corrupt { .. } | StoreError::Io { .. } | StoreError::UnsupportedSchema { .. } => {
                ErrorCode::Integrity
            }
        };
        Self::new(code, e.to_string())
    }
}

impl From<WorkflowError> for ApiError {
    fn from(e: WorkflowError) -> Self {
        let message = e.to_string();
        match e {
            WorkflowError::Store(s) => s.into(),
            WorkflowError::Gateway { ref run_id, .. } | WorkflowError::Parse { ref run_id, .. } => {
                let detail = run_id.as_ref().map_or(Value::Null, |id| serde_json::json!({ "run_id": id }));
                Self::new(ErrorCode::ProviderError, message).with_detail(detail)
            }
            WorkflowError::ThemeList { raw, .. } => {
                Self::new(ErrorCode::ProviderError, message).with_detail(serde_json::json!({ "raw_response": raw }))
            }
            WorkflowError::Consensus(ConsensusError::AlreadyComplete) => Self::new(ErrorCode::Conflict, message),
            WorkflowError::Consensus(ConsensusError::Unresolved(cells)) => {
                Self::new(ErrorCode::Conflict, message).with_detail(serde_json::json!({ "unresolved": cells }))
            }
            _ => Self::new(ErrorCode::BadRequest, message),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.code.status(), axum::Json(self)).into_response()
    }
}

/// A CLI failure with its exit code: 1 for caller errors, 2 for provider
/// and system errors.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn user(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }

    pub fn system(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }
}

impl From<WorkflowError> for CliError {
    fn from(e: WorkflowError) -> Self {
        if e.is_system() {
            let mut message = e.to_string();
            if let WorkflowError::ThemeList { raw, .. } = &e {
                message.push_str("\n--- response ---\n");
                message.push_str(raw);
            }
            Self::system(message)
        } else {
            Self::user(e.to_string())
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        WorkflowError::Store(e).into()
    }
}
