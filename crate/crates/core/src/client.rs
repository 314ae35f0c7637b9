//! Requesting-party client: runs the UMA grant flow against a resource
//! server and an authorization server and records a transcript.
//!
//! Ticket mode: attempt the operation at the RS, take `as_uri` and
//! `ticket` from the `401` challenge, exchange them with a claim token for
//! an RPT, retry with the RPT. Direct mode skips the first attempt and
//! sends the permissions derived from the operation (same mapping table as
//! the RS) straight to the AS.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use reqwest::header::{HeaderMap, AUTHORIZATION, CONTENT_TYPE, WWW_AUTHENTICATE};
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::auth_server::TokenRequest;
use crate::claims::{ClaimToken, IssuerRegistry, Verifiers};
use crate::engine::{self, ComplianceReport, Resolution, StateOfTheWorld};
use crate::permission::RequestedPermission;
use crate::resource_server::mapping::{self, Method, ResourcePath};
use crate::resource_server::http_client;
use crate::store::PolicySet;
use crate::{token, UMA_GRANT_TYPE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StepLabel {
    #[serde(rename = "RS-attempt")]
    RsAttempt,
    #[serde(rename = "AS-token")]
    AsToken,
    #[serde(rename = "RS-retry")]
    RsRetry,
}

impl StepLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            StepLabel::RsAttempt => "RS-attempt",
            StepLabel::AsToken => "AS-token",
            StepLabel::RsRetry => "RS-retry",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Step {
    pub label: StepLabel,
    pub request: String,
    pub response: String,
    pub status: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Outcome {
    Granted,
    NeedInfo,
    Denied,
    Error,
}

impl Outcome {
    /// Process exit code for the CLI.
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Granted => 0,
            Outcome::NeedInfo => 3,
            Outcome::Denied => 4,
            Outcome::Error => 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowTranscript {
    pub steps: Vec<Step>,
    pub outcome: Outcome,
    /// Last ticket received, from a `401` challenge or a `need_info` error.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ticket: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rpt: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rpt_permissions: Option<Vec<RequestedPermission>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub body: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl FlowTranscript {
    fn new() -> Self {
        Self {
            steps: Vec::new(),
            outcome: Outcome::Error,
            ticket: None,
            rpt: None,
            rpt_permissions: None,
            body: None,
            error: None,
        }
    }

    fn fail(mut self, outcome: Outcome, error: impl Into<String>) -> Self {
        self.outcome = outcome;
        self.error = Some(error.into());
        self
    }

    /// Human-readable rendering, one line per step.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, s) in self.steps.iter().enumerate() {
            out.push_str(&format!("{}. [{}] {}\n   -> {}\n", i + 1, s.label.as_str(), s.request, s.response));
        }
        out.push_str(&format!("outcome: {:?}\n", self.outcome));
        if let Some(t) = &self.ticket {
            if self.outcome == Outcome::NeedInfo {
                out.push_str(&format!("ticket: {t}\n"));
            }
        }
        if let Some(p) = &self.rpt_permissions {
            out.push_str(&format!("granted: {}\n", serde_json::to_string(p).unwrap_or_default()));
        }
        if let Some(e) = &self.error {
            out.push_str(&format!("error: {e}\n"));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct DirectMode {
    /// AS issuer URI, known in advance.
    pub as_uri: String,
    /// Whether the target already exists (decides the PUT mapping).
    pub target_exists: bool,
}

#[derive(Debug, Clone)]
pub struct FlowRequest {
    pub method: Method,
    pub url: String,
    pub body: Vec<u8>,
    pub content_type: Option<String>,
    pub claim_token: Option<ClaimToken>,
    pub direct: Option<DirectMode>,
}

impl FlowRequest {
    pub fn new(method: Method, url: impl Into<String>) -> Self {
        Self {
            method,
            url: url.into(),
            body: Vec::new(),
            content_type: None,
            claim_token: None,
            direct: None,
        }
    }

    pub fn with_claim_token(mut self, token: ClaimToken) -> Self {
        self.claim_token = Some(token);
        self
    }

    pub fn with_body(mut self, body: impl Into<Vec<u8>>, content_type: &str) -> Self {
        self.body = body.into();
        self.content_type = Some(content_type.to_string());
        self
    }

    pub fn direct(mut self, as_uri: impl Into<String>, target_exists: bool) -> Self {
        self.direct = Some(DirectMode { as_uri: as_uri.into(), target_exists });
        self
    }
}

#[derive(Debug, Error)]
pub enum UrlError {
    #[error("invalid URL {0:?}")]
    Invalid(String),
    #[error(transparent)]
    Path(#[from] mapping::MappingError),
}

/// Splits an absolute resource URL into its base (`scheme://authority`)
/// and resource path.
pub fn split_url(url: &str) -> Result<(String, ResourcePath), UrlError> {
    let (scheme, rest) = url.split_once("://").ok_or_else(|| UrlError::Invalid(url.to_string()))?;
    let cut = rest.find('/').unwrap_or(rest.len());
    let (authority, path) = rest.split_at(cut);
    if scheme.is_empty() || authority.is_empty() {
        return Err(UrlError::Invalid(url.to_string()));
    }
    let path = if path.is_empty() { "/" } else { path };
    let path = path.split(['?', '#']).next().unwrap_or("/");
    Ok((format!("{scheme}://{authority}"), ResourcePath::parse(path)?))
}

/// Permissions a direct-mode client asks for: the RS mapping table applied
/// to the operation. POST gets a client-chosen child name.
pub fn direct_permissions(
    method: Method,
    url: &str,
    target_exists: bool,
) -> Result<Vec<RequestedPermission>, UrlError> {
    let (base, path) = split_url(url)?;
    let child = (method == Method::Post).then(|| uuid::Uuid::new_v4().to_string());
    Ok(mapping::required_permissions(method, &base, &path, target_exists, child.as_deref())?)
}

/// Parses `UMA realm="rs", as_uri="...", ticket="..."`.
pub fn parse_uma_challenge(value: &str) -> Option<(String, String)> {
    let rest = value.trim().strip_prefix("UMA")?.trim_start();
    let mut params = BTreeMap::new();
    for part in rest.split(',') {
        let (k, v) = part.trim().split_once('=')?;
        params.insert(k.trim().to_ascii_lowercase(), v.trim().trim_matches('"').to_string());
    }
    Some((params.remove("as_uri")?, params.remove("ticket")?))
}

fn describe_response(status: reqwest::StatusCode, headers: &HeaderMap, body: &[u8]) -> String {
    let mut s = status.to_string();
    if let Some(v) = headers.get(WWW_AUTHENTICATE).and_then(|v| v.to_str().ok()) {
        s.push_str(&format!("; www-authenticate: {v}"));
    }
    if let Some(v) = headers.get(reqwest::header::LOCATION).and_then(|v| v.to_str().ok()) {
        s.push_str(&format!("; location: {v}"));
    }
    let is_json = headers
        .get(CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|ct| ct.starts_with("application/json"));
    if is_json && !body.is_empty() {
        s.push_str(&format!("; {}", String::from_utf8_lossy(body)));
    }
    s
}

struct Exchange {
    status: reqwest::StatusCode,
    headers: HeaderMap,
    body: Vec<u8>,
}

pub struct FlowClient {
    http: reqwest::Client,
}

impl Default for FlowClient {
    fn default() -> Self {
        Self { http: http_client() }
    }
}

impl FlowClient {
    pub fn new() -> Self {
        Self::default()
    }

    async fn rs_call(&self, req: &FlowRequest, rpt: Option<&str>) -> Result<Exchange, reqwest::Error> {
        let method = reqwest::Method::from_bytes(req.method.as_str().as_bytes()).expect("known method");
        let mut builder = self.http.request(method, &req.url);
        if let Some(t) = rpt {
            builder = builder.header(AUTHORIZATION, format!("Bearer {t}"));
        }
        if matches!(req.method, Method::Put | Method::Post | Method::Patch) {
            builder = builder
                .header(CONTENT_TYPE, req.content_type.as_deref().unwrap_or("application/octet-stream"))
                .body(req.body.clone());
        }
        let resp = builder.send().await?;
        let status = resp.status();
        let headers = resp.headers().clone();
        let body = resp.bytes().await?.to_vec();
        Ok(Exchange { status, headers, body })
    }

    async fn token_endpoint(&self, as_uri: &str) -> Result<String, String> {
        let as_uri = as_uri.trim_end_matches('/');
        let doc: Value = self
            .http
            .get(format!("{as_uri}{}", crate::auth_server::DISCOVERY_PATH))
            .send()
            .await
            .map_err(|e| e.to_string())?
            .json()
            .await
            .map_err(|e| e.to_string())?;
        doc.get("token_endpoint")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| "discovery document lacks token_endpoint".to_string())
    }

    /// Runs the flow. Network failures end in [`Outcome::Error`] rather than
    /// an `Err`.
    pub async fn run(&self, req: &FlowRequest) -> FlowTranscript {
        let mut tr = FlowTranscript::new();

        let (as_uri, token_req) = match &req.direct {
            Some(direct) => {
                let permissions = match direct_permissions(req.method, &req.url, direct.target_exists) {
                    Ok(p) => p,
                    Err(e) => return tr.fail(Outcome::Error, e.to_string()),
                };
                let token_req = TokenRequest {
                    grant_type: UMA_GRANT_TYPE.into(),
                    ticket: None,
                    permissions: Some(permissions),
                    claim_token: req.claim_token.clone(),
                };
                (direct.as_uri.clone(), token_req)
            }
            None => {
                let first = match self.rs_call(req, None).await {
                    Ok(x) => x,
                    Err(e) => return tr.fail(Outcome::Error, e.to_string()),
                };
                tr.steps.push(Step {
                    label: StepLabel::RsAttempt,
                    request: format!("{} {}", req.method, req.url),
                    response: describe_response(first.status, &first.headers, &first.body),
                    status: first.status.as_u16(),
                });
                if first.status != reqwest::StatusCode::UNAUTHORIZED {
                    tr.outcome = if first.status.is_success() { Outcome::Granted } else { Outcome::Error };
                    tr.body = Some(String::from_utf8_lossy(&first.body).into_owned());
                    return tr;
                }
                let challenge = first
                    .headers
                    .get(WWW_AUTHENTICATE)
                    .and_then(|v| v.to_str().ok())
                    .and_then(parse_uma_challenge);
                let Some((as_uri, ticket)) = challenge else {
                    return tr.fail(Outcome::Error, "401 without a UMA challenge");
                };
                tr.ticket = Some(ticket.clone());
                let token_req = TokenRequest {
                    grant_type: UMA_GRANT_TYPE.into(),
                    ticket: Some(ticket),
                    permissions: None,
                    claim_token: req.claim_token.clone(),
                };
                (as_uri, token_req)
            }
        };

        let endpoint = match self.token_endpoint(&as_uri).await {
            Ok(e) => e,
            Err(e) => return tr.fail(Outcome::Error, format!("AS discovery failed: {e}")),
        };
        let form = token_req.to_form();
        let resp = match self.http.post(&endpoint).form(&form).send().await {
            Ok(r) => r,
            Err(e) => return tr.fail(Outcome::Error, e.to_string()),
        };
        let status = resp.status();
        let headers = resp.headers().clone();
        let body = resp.bytes().await.map(|b| b.to_vec()).unwrap_or_default();
        tr.steps.push(Step {
            label: StepLabel::AsToken,
            request: format!(
                "POST {endpoint} {}",
                serde_urlencoded::to_string(&form).unwrap_or_default()
            ),
            response: describe_response(status, &headers, &body),
            status: status.as_u16(),
        });
        let json: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
        if status != reqwest::StatusCode::OK {
            return match json.get("error").and_then(Value::as_str) {
                Some("need_info") => {
                    tr.ticket = json.get("ticket").and_then(Value::as_str).map(str::to_string);
                    tr.fail(Outcome::NeedInfo, "authorization server needs claims")
                }
                Some("request_denied") => tr.fail(Outcome::Denied, "request denied"),
                Some(code) => tr.fail(Outcome::Error, format!("token endpoint error {code}")),
                None => tr.fail(Outcome::Error, format!("token endpoint answered {status}")),
            };
        }
        let Some(rpt) = json.get("access_token").and_then(Value::as_str).map(str::to_string) else {
            return tr.fail(Outcome::Error, "token response lacks access_token");
        };
        tr.rpt_permissions = token::decode(&rpt)
            .ok()
            .and_then(|d| serde_json::from_value(d.payload.get("permissions").cloned().unwrap_or(Value::Null)).ok());
        tr.rpt = Some(rpt.clone());

        let retry = match self.rs_call(req, Some(&rpt)).await {
            Ok(x) => x,
            Err(e) => return tr.fail(Outcome::Error, e.to_string()),
        };
        tr.steps.push(Step {
            label: StepLabel::RsRetry,
            request: format!("{} {} (Bearer RPT)", req.method, req.url),
            response: describe_response(retry.status, &retry.headers, &retry.body),
            status: retry.status.as_u16(),
        });
        tr.body = Some(String::from_utf8_lossy(&retry.body).into_owned());
        tr.outcome = match retry.status.as_u16() {
            401 | 403 => Outcome::Denied,
            s if s >= 500 => Outcome::Error,
            _ => Outcome::Granted,
        };
        tr
    }
}

/// Evaluates locally what a co-located AS would decide, for `--explain`.
pub fn explain(
    policies: &PolicySet,
    registry: &IssuerRegistry,
    claim_token: &ClaimToken,
    requested: &[RequestedPermission],
    now: DateTime<Utc>,
) -> Result<Vec<ComplianceReport>, String> {
    let claims = Verifiers::default()
        .verify(claim_token, registry, now)
        .map_err(|e| e.to_string())?;
    engine::grant_with_reports(policies, &claims, requested, &StateOfTheWorld::at(now), Resolution::default())
        .map(|(_, reports)| reports)
        .map_err(|e| e.to_string())
}
