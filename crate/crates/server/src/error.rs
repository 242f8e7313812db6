use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;
use shortcut_core::miner::ConfigError;
use shortcut_core::projection::ProjectionError;
use shortcut_core::whatif::WhatIfError;

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("unknown dataset {0:?}")]
    UnknownDataset(String),
    #[error("unknown shortcut {0:?}")]
    UnknownShortcut(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("{count} shortcuts survive the filters; the projection is limited to {limit}")]
    TooManyPoints { count: usize, limit: usize },
    #[error("could not persist derived dataset: {0}")]
    Storage(String),
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::UnknownDataset(_) | ApiError::UnknownShortcut(_) => StatusCode::NOT_FOUND,
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::TooManyPoints { .. } => StatusCode::CONFLICT,
            ApiError::Storage(_) => StatusCode::INSUFFICIENT_STORAGE,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.to_string() });
        if let ApiError::TooManyPoints { count, limit } = &self {
            body["count"] = json!(count);
            body["limit"] = json!(limit);
        }
        if self.status().is_server_error() {
            log::error!("{self}");
        }
        (self.status(), Json(body)).into_response()
    }
}

impl From<ConfigError> for ApiError {
    fn from(e: ConfigError) -> Self {
        ApiError::BadRequest(e.to_string())
    }
}

impl From<WhatIfError> for ApiError {
    fn from(e: WhatIfError) -> Self {
        match e {
            WhatIfError::UnknownShortcut(id) => ApiError::UnknownShortcut(id),
            WhatIfError::UnknownSplit(s) => ApiError::BadRequest(format!("unknown split {s:?}")),
            WhatIfError::StaleArtifact => ApiError::Internal(e.to_string()),
            WhatIfError::Config(c) => c.into(),
        }
    }
}

impl From<ProjectionError> for ApiError {
    fn from(e: ProjectionError) -> Self {
        match e {
            ProjectionError::TooMany(count) => ApiError::TooManyPoints {
                count,
                limit: shortcut_core::projection::MAX_POINTS,
            },
            ProjectionError::UnknownSplit(s) => ApiError::BadRequest(format!("unknown split {s:?}")),
        }
    }
}
