use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error(transparent)]
    Store(#[from] neurovol::Error),

    #[error("bad request: {0}")]
    BadRequest(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("cannot start server: {0}")]
    Startup(String),

    #[error("internal error: {0}")]
    Internal(String),
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        use neurovol::Error as E;
        match self {
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Startup(_) | ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
            ApiError::Store(e) => match e {
                E::NotFound(_) => StatusCode::NOT_FOUND,
                E::InvalidArgument(_) | E::Format { .. } | E::Json(_) | E::Csv(_) => StatusCode::BAD_REQUEST,
                E::StaleRevision { .. } | E::Conflict(_) => StatusCode::CONFLICT,
                E::InsufficientLabels { .. } => StatusCode::PRECONDITION_FAILED,
                E::BatchFailed(_) | E::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.status();
        let mut body = json!({ "error": self.to_string() });
        match &self {
            ApiError::Store(neurovol::Error::StaleRevision { base, head }) => {
                body["head"] = json!(head);
                body["base"] = json!(base);
            }
            ApiError::Store(neurovol::Error::InsufficientLabels { neuron, glia, required }) => {
                body["neuron"] = json!(neuron);
                body["glia"] = json!(glia);
                body["required"] = json!(required);
            }
            _ => {}
        }
        if status.is_server_error() {
            log::error!("{self}");
        }
        (status, Json(body)).into_response()
    }
}
