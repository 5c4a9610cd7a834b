use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use jam_core::driver::DriverError;
use jam_core::gateway::GatewayError;
use jam_core::GameError;

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("it is not your turn to speak")]
    NotYourTurn,
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error(transparent)]
    Game(GameError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("storage error: {0}")]
    Storage(#[from] std::io::Error),
    #[error("internal error: {0}")]
    Internal(String),
}

impl From<GameError> for ApiError {
    fn from(e: GameError) -> Self {
        match e {
            GameError::NotCurrentSpeaker { .. } => ApiError::NotYourTurn,
            e => ApiError::Game(e),
        }
    }
}

impl From<DriverError> for ApiError {
    fn from(e: DriverError) -> Self {
        match e {
            DriverError::Game(g) => g.into(),
            DriverError::AwaitingHuman => ApiError::NotYourTurn,
            e @ DriverError::NotSimulated(_) => ApiError::Internal(e.to_string()),
        }
    }
}

/// Error body returned by every endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

impl ApiError {
    /// Stable protocol code for clients.
    pub fn code(&self) -> &'static str {
        match self {
            ApiError::UnknownSession(_) => "UnknownSession",
            ApiError::NotYourTurn => "NotYourTurn",
            ApiError::BadRequest(_) => "BadRequest",
            ApiError::Game(g) => match g {
                GameError::InvalidConfig(_) => "InvalidConfig",
                GameError::NotSpeaking => "NotSpeaking",
                GameError::SelfChallenge => "SelfChallenge",
                GameError::NotCurrentSpeaker { .. } => "NotYourTurn",
                GameError::UnknownPlayer(_) => "UnknownPlayer",
                GameError::InvalidTime { .. } => "InvalidTime",
                GameError::RoundNotExpired { .. } => "RoundNotExpired",
                GameError::RoundNotFinished(_) => "RoundNotFinished",
                GameError::UnknownSegment(_) => "UnknownSegment",
                GameError::NotSegmentOwner { .. } => "NotSegmentOwner",
                GameError::InvalidAmendment(_) => "InvalidAmendment",
                GameError::InvalidTokens(_) => "InvalidTokens",
                GameError::GameEnded => "GameEnded",
                GameError::GameNotEnded => "GameNotEnded",
                GameError::CorruptLog { .. } => "CorruptLog",
                GameError::SequenceGap { .. } => "SequenceGap",
                GameError::Persona(_) => "Persona",
            },
            ApiError::Gateway(g) => match g {
                GatewayError::UnsupportedFormat(_) => "UnsupportedFormat",
                GatewayError::Timeout => "ProviderTimeout",
                GatewayError::EmptySpeech => "EmptySpeech",
                _ => "ProviderFailure",
            },
            ApiError::Storage(_) => "Storage",
            ApiError::Internal(_) => "Internal",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::UnknownSession(_) => StatusCode::NOT_FOUND,
            ApiError::NotYourTurn => StatusCode::CONFLICT,
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::Game(g) => match g {
                GameError::InvalidConfig(_)
                | GameError::InvalidTime { .. }
                | GameError::UnknownSegment(_)
                | GameError::UnknownPlayer(_)
                | GameError::InvalidAmendment(_)
                | GameError::InvalidTokens(_) => StatusCode::BAD_REQUEST,
                GameError::NotSegmentOwner { .. } => StatusCode::FORBIDDEN,
                GameError::CorruptLog { .. } | GameError::SequenceGap { .. } | GameError::Persona(_) => {
                    StatusCode::INTERNAL_SERVER_ERROR
                }
                _ => StatusCode::CONFLICT,
            },
            ApiError::Gateway(g) => match g {
                GatewayError::UnsupportedFormat(_) => StatusCode::UNSUPPORTED_MEDIA_TYPE,
                GatewayError::EmptySpeech => StatusCode::BAD_REQUEST,
                GatewayError::Timeout => StatusCode::GATEWAY_TIMEOUT,
                _ => StatusCode::BAD_GATEWAY,
            },
            ApiError::Storage(_) | ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status().is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        let body = ErrorBody {
            error: self.code().to_string(),
            message: self.to_string(),
        };
        (self.status(), Json(body)).into_response()
    }
}
