use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;
use sia_core::SiaError;

use crate::auth::AuthError;

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error(transparent)]
    Core(#[from] SiaError),
    #[error(transparent)]
    Auth(#[from] AuthError),
    #[error("{0}")]
    BadRequest(String),
    #[error("internal error: {0}")]
    Internal(String),
}

pub type ApiResult<T> = Result<T, ApiError>;

pub fn status_for(e: &SiaError) -> StatusCode {
    use SiaError::*;
    match e {
        ValidationFailed(_) | InvalidSpec(_) | InvalidValue(_) | InvalidInterval { .. } | Parse { .. }
        | InvalidDelta(_) | DefaultMissing(_) | InvalidRequest(_) | InvalidOpacity(_) | NotAnImage(_)
        | UnknownPlace(_) | UnknownPeriod(_) | SchemaVersionUnknown(_) => StatusCode::BAD_REQUEST,
        PermissionDenied => StatusCode::FORBIDDEN,
        NotFound(_) => StatusCode::NOT_FOUND,
        StalePlan { .. } => StatusCode::CONFLICT,
        EmptyComposition(_) | MalformedSourceVector { .. } => StatusCode::UNPROCESSABLE_ENTITY,
        Locked(_) => StatusCode::SERVICE_UNAVAILABLE,
        CorruptRecordFile { .. } | Storage(_) | Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::Core(e) => status_for(e),
            ApiError::Auth(AuthError::Forbidden) => StatusCode::FORBIDDEN,
            ApiError::Auth(AuthError::Config { .. }) => StatusCode::INTERNAL_SERVER_ERROR,
            ApiError::Auth(_) => StatusCode::UNAUTHORIZED,
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    fn code(&self) -> &'static str {
        match self {
            ApiError::Core(e) => e.code(),
            ApiError::Auth(AuthError::Forbidden) => "forbidden",
            ApiError::Auth(AuthError::BadCredentials) => "bad-credentials",
            ApiError::Auth(AuthError::Config { .. }) => "config",
            ApiError::Auth(_) => "unauthorized",
            ApiError::BadRequest(_) => "bad-request",
            ApiError::Internal(_) => "internal",
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        let mut body = json!({ "error": self.code(), "message": self.to_string() });
        match &self {
            ApiError::Core(SiaError::ValidationFailed(v)) => body["violations"] = json!(v),
            ApiError::Core(SiaError::EmptyComposition(w)) => body["warnings"] = json!(w),
            _ => {}
        }
        let mut resp = (status, Json(body)).into_response();
        if status == StatusCode::UNAUTHORIZED {
            resp.headers_mut()
                .insert(axum::http::header::WWW_AUTHENTICATE, "Bearer".parse().unwrap());
        }
        resp
    }
}
