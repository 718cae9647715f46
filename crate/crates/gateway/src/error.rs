//! HTTP error mapping. Every internal error value maps to exactly one status
//! and a fixed message; request content is never echoed.

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use carebridge_core::orchestrator::rpc::{
    ADAPTER_UNAVAILABLE, INTERNAL_ERROR, INVALID_PARAMS, INVALID_REQUEST, METHOD_NOT_FOUND,
    PARSE_ERROR,
};
use carebridge_core::orchestrator::RpcError;
use carebridge_core::privacy::{ConsentError, DenyReason};
use carebridge_core::store::StoreError;
use serde_json::json;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum ApiError {
    #[error("malformed request")]
    Malformed,
    #[error("request body too large")]
    TooLarge,
    #[error("message must not be empty")]
    EmptyMessage,
    #[error("unsupported language")]
    UnsupportedLanguage,
    #[error("unknown agent")]
    UnknownAgent,
    #[error("authentication required")]
    Unauthenticated,
    #[error("invalid or expired token")]
    BadToken,
    #[error("invalid credentials")]
    BadCredentials,
    #[error("access denied")]
    Forbidden(DenyReason),
    #[error("not found")]
    NotFound,
    #[error("conflict")]
    Conflict,
    #[error("unprocessable request")]
    Unprocessable,
    #[error("completion backend unavailable")]
    AdapterUnavailable,
    #[error("audit log unavailable")]
    AuditUnavailable,
    #[error("stored data failed integrity checks")]
    Integrity,
    #[error("internal error")]
    Internal,
}

impl ApiError {
    pub fn status(self) -> StatusCode {
        match self {
            ApiError::Malformed | ApiError::UnsupportedLanguage | ApiError::UnknownAgent => {
                StatusCode::BAD_REQUEST
            }
            ApiError::TooLarge => StatusCode::PAYLOAD_TOO_LARGE,
            ApiError::EmptyMessage | ApiError::Unprocessable => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::Unauthenticated | ApiError::BadToken | ApiError::BadCredentials => {
                StatusCode::UNAUTHORIZED
            }
            ApiError::Forbidden(_) => StatusCode::FORBIDDEN,
            ApiError::NotFound => StatusCode::NOT_FOUND,
            ApiError::Conflict => StatusCode::CONFLICT,
            ApiError::AdapterUnavailable => StatusCode::BAD_GATEWAY,
            ApiError::AuditUnavailable => StatusCode::SERVICE_UNAVAILABLE,
            ApiError::Integrity | ApiError::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            ApiError::Malformed => "malformed_request",
            ApiError::TooLarge => "payload_too_large",
            ApiError::EmptyMessage => "empty_message",
            ApiError::UnsupportedLanguage => "unsupported_language",
            ApiError::UnknownAgent => "unknown_agent",
            ApiError::Unauthenticated => "unauthenticated",
            ApiError::BadToken => "invalid_token",
            ApiError::BadCredentials => "invalid_credentials",
            ApiError::Forbidden(DenyReason::NoConsent) => "no_consent",
            ApiError::Forbidden(DenyReason::NotOwner) => "not_owner",
            ApiError::Forbidden(_) => "forbidden",
            ApiError::NotFound => "not_found",
            ApiError::Conflict => "conflict",
            ApiError::Unprocessable => "unprocessable",
            ApiError::AdapterUnavailable => "adapter_unavailable",
            ApiError::AuditUnavailable => "audit_unavailable",
            ApiError::Integrity => "integrity_error",
            ApiError::Internal => "internal_error",
        }
    }

    /// Maps an access denial, turning anonymous denials into 401.
    pub fn denied(reason: DenyReason) -> Self {
        match reason {
            DenyReason::Unauthenticated => ApiError::Unauthenticated,
            DenyReason::AuditUnavailable => ApiError::AuditUnavailable,
            other => ApiError::Forbidden(other),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"error": {"code": self.code(), "message": self.to_string()}});
        (self.status(), Json(body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::AccessDenied(reason) => ApiError::denied(reason),
            StoreError::NotFound => ApiError::NotFound,
            StoreError::Conflict => ApiError::Conflict,
            StoreError::IntegrityError => ApiError::Integrity,
            StoreError::InvalidRecord(_) | StoreError::InvalidIntent(_) => ApiError::Unprocessable,
            StoreError::StorageFailure(_) | StoreError::EncryptionFailure => ApiError::Internal,
            StoreError::AuditUnavailable => ApiError::AuditUnavailable,
        }
    }
}

impl From<ConsentError> for ApiError {
    fn from(e: ConsentError) -> Self {
        match e {
            ConsentError::NotOwner => ApiError::Forbidden(DenyReason::NotOwner),
            ConsentError::UnknownGrant => ApiError::NotFound,
            ConsentError::AlreadyRevoked => ApiError::Conflict,
            ConsentError::InvalidGrantee => ApiError::Unprocessable,
            ConsentError::AuditUnavailable => ApiError::AuditUnavailable,
        }
    }
}

impl From<RpcError> for ApiError {
    fn from(e: RpcError) -> Self {
        match (e.code, e.message) {
            (PARSE_ERROR | INVALID_REQUEST, _) => ApiError::Malformed,
            (METHOD_NOT_FOUND, _) => ApiError::UnknownAgent,
            (INVALID_PARAMS, "empty input") => ApiError::EmptyMessage,
            (INVALID_PARAMS, "unsupported language") => ApiError::UnsupportedLanguage,
            (INVALID_PARAMS, _) => ApiError::Malformed,
            (ADAPTER_UNAVAILABLE, _) => ApiError::AdapterUnavailable,
            (INTERNAL_ERROR, "audit log unavailable") => ApiError::AuditUnavailable,
            _ => ApiError::Internal,
        }
    }
}
