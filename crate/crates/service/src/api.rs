//! Wire types, error bodies and the body extractor.

use axum::body::Bytes;
use axum::extract::{FromRequest, Request};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use mediaprof_core::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ApiStatus {
    AwaitingDecision,
    Expanding,
    Training,
    Idle,
    Converged,
    Finalized,
    /// Creation failed; the session holds no state.
    Failed,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fields: Vec<FieldError>,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                code: code.into(),
                message: message.into(),
                fields: Vec::new(),
            },
        }
    }

    pub fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        let (field, message) = (field.into(), message.into());
        let mut e = ApiError::new(StatusCode::BAD_REQUEST, "invalid_body", format!("{field}: {message}"));
        e.body.fields.push(FieldError { field, message });
        e
    }

    pub fn not_found(what: impl Into<String>) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "not_found", what)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError::from(&e)
    }
}

impl From<&Error> for ApiError {
    fn from(e: &Error) -> Self {
        let status = match e {
            Error::Conflict(_) | Error::UnknownValidation(_) | Error::Precondition(_) => StatusCode::CONFLICT,
            Error::UnknownCommunity(_) => StatusCode::NOT_FOUND,
            Error::InvalidArgument(_) | Error::Json(_) | Error::Parse { .. } => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "schema_version": SCHEMA_VERSION, "error": self.body });
        (self.status, Json(body)).into_response()
    }
}

/// Field named by a serde message such as "missing field `accepted`".
fn named_field(message: &str) -> Option<&str> {
    let start = message.find('`')? + 1;
    let len = message[start..].find('`')?;
    Some(&message[start..start + len])
}

/// Decodes `value` into `T`, naming the offending field on failure.
pub fn decode<T: DeserializeOwned>(value: Value, prefix: &str) -> Result<T, ApiError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let message = e.inner().to_string();
        let field = if path == "." {
            named_field(&message).unwrap_or("").to_string()
        } else {
            path
        };
        let field = match (prefix.is_empty(), field.is_empty()) {
            (true, _) => field,
            (false, true) => prefix.to_string(),
            (false, false) => format!("{prefix}.{field}"),
        };
        ApiError::field(field, message)
    })
}

/// Checks the envelope and decodes a request body.
pub fn parse_body<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, ApiError> {
    let value: Value = if bytes.iter().all(u8::is_ascii_whitespace) {
        Value::Object(Default::default())
    } else {
        serde_json::from_slice(bytes)
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "malformed_json", e.to_string()))?
    };
    let Some(obj) = value.as_object() else {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "invalid_body", "body must be a JSON object"));
    };
    match obj.get("schema_version") {
        None => return Err(ApiError::field("schema_version", "missing field `schema_version`")),
        Some(v) if v != &json!(SCHEMA_VERSION) => {
            return Err(ApiError::field(
                "schema_version",
                format!("unsupported version {v}; expected {SCHEMA_VERSION}"),
            ))
        }
        Some(_) => {}
    }
    decode(value, "")
}

/// A JSON request body with field-level errors.
pub struct Body<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for Body<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, ApiError> {
        let bytes = Bytes::from_request(req, state)
            .await
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "unreadable_body", e.to_string()))?;
        parse_body(&bytes).map(Body)
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub schema_version: u32,
    /// Workspace directory; defaults to the service workspace.
    #[serde(default)]
    pub workspace: Option<String>,
    /// Partial configuration merged over the service configuration.
    #[serde(default)]
    pub config: Option<Value>,
    /// Start the first validation round right away.
    #[serde(default = "yes")]
    pub start_round: bool,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionRequest {
    pub schema_version: u32,
    pub validation: u64,
    pub accepted: Vec<usize>,
    #[serde(default)]
    pub rejected: Vec<usize>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpandRequest {
    pub schema_version: u32,
    pub community: u64,
    #[serde(default = "one")]
    pub rounds: usize,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmptyRequest {
    pub schema_version: u32,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinalizeRequest {
    pub schema_version: u32,
    #[serde(default = "interactive")]
    pub model_tag: String,
}

fn interactive() -> String {
    "interactive".into()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_field_is_named() {
        let e = parse_body::<DecisionRequest>(br#"{"schema_version":1,"validation":3}"#).unwrap_err();
        assert_eq!(e.status, StatusCode::BAD_REQUEST);
        assert_eq!(e.body.fields[0].field, "accepted");
    }

    #[test]
    fn nested_type_error_has_path() {
        let e = parse_body::<DecisionRequest>(br#"{"schema_version":1,"validation":3,"accepted":[1,"x"]}"#)
            .unwrap_err();
        assert_eq!(e.body.fields[0].field, "accepted[1]");
    }

    #[test]
    fn envelope_checked() {
        assert_eq!(parse_body::<EmptyRequest>(b"{}").unwrap_err().body.fields[0].field, "schema_version");
        assert_eq!(
            parse_body::<EmptyRequest>(br#"{"schema_version":2}"#).unwrap_err().body.fields[0].field,
            "schema_version"
        );
        assert_eq!(parse_body::<EmptyRequest>(b"[1]").unwrap_err().body.code, "invalid_body");
        assert_eq!(parse_body::<EmptyRequest>(b"{").unwrap_err().body.code, "malformed_json");
        let e = parse_body::<EmptyRequest>(br#"{"schema_version":1,"extra":0}"#).unwrap_err();
        assert_eq!(e.body.fields[0].field, "extra");
    }

    #[test]
    fn core_errors_map_to_statuses() {
        assert_eq!(ApiError::from(Error::Conflict(1)).status, StatusCode::CONFLICT);
        assert_eq!(ApiError::from(Error::UnknownValidation(1)).status, StatusCode::CONFLICT);
        assert_eq!(ApiError::from(Error::UnknownCommunity(1)).status, StatusCode::NOT_FOUND);
        assert_eq!(
            ApiError::from(Error::InvalidArgument("x".into())).status,
            StatusCode::BAD_REQUEST
        );
    }
}
