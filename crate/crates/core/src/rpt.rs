//! Requesting Party Tokens: compact Ed25519 tokens carrying the granted
//! permissions. Signed by the authorization server, validated locally by
//! the resource server.

use axum::http::{header, HeaderMap};
use chrono::{DateTime, Duration, Utc};
use ed25519_dalek::{SigningKey, VerifyingKey};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::permission::{self, RequestedPermission};
use crate::token::{self, TokenError};

pub const DEFAULT_RPT_TTL_SECS: i64 = 600;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RptClaims {
    pub iss: String,
    pub sub: String,
    pub permissions: Vec<RequestedPermission>,
    pub iat: i64,
    pub exp: i64,
}

impl RptClaims {
    pub fn new(
        issuer: &str,
        subject: &str,
        granted: Vec<RequestedPermission>,
        now: DateTime<Utc>,
        ttl: Duration,
    ) -> Self {
        Self {
            iss: issuer.to_string(),
            sub: subject.to_string(),
            permissions: permission::merge(granted),
            iat: now.timestamp(),
            exp: (now + ttl).timestamp(),
        }
    }

    pub fn sign(&self, key: &SigningKey) -> String {
        token::sign(&serde_json::to_value(self).expect("rpt json"), key)
    }

    /// True when the token grants every required `(resource, right)` pair.
    pub fn covers(&self, required: &[RequestedPermission]) -> bool {
        permission::covers(&self.permissions, required)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RptError {
    #[error(transparent)]
    Token(#[from] TokenError),
    #[error("token payload is not an RPT: {0}")]
    Payload(String),
    #[error("token issued by {found}, expected {expected}")]
    WrongIssuer { expected: String, found: String },
    #[error("token expired")]
    Expired,
}

/// Token from an `Authorization: Bearer <token>` header.
pub fn bearer(headers: &HeaderMap) -> Option<&str> {
    let value = headers.get(header::AUTHORIZATION)?.to_str().ok()?;
    let (scheme, rest) = value.split_once(' ')?;
    scheme.eq_ignore_ascii_case("bearer").then(|| rest.trim())
}

/// Checks signature, issuer and expiry (`exp > now`, strict).
pub fn validate(raw: &str, key: &VerifyingKey, issuer: &str, now: DateTime<Utc>) -> Result<RptClaims, RptError> {
    let payload = token::verify(raw, key)?;
    let claims: RptClaims = serde_json::from_value(payload).map_err(|e| RptError::Payload(e.to_string()))?;
    if claims.iss != issuer {
        return Err(RptError::WrongIssuer { expected: issuer.to_string(), found: claims.iss });
    }
    if claims.exp <= now.timestamp() {
        return Err(RptError::Expired);
    }
    Ok(claims)
}
