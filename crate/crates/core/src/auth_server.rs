//! UMA authorization server.
//!
//! Endpoints:
//!
//! | method | path                              |                                   |
//! |--------|-----------------------------------|-----------------------------------|
//! | GET    | `/.well-known/uma2-configuration` | discovery document                |
//! | POST   | `/permission`                     | ticket issuance for the RS        |
//! | POST   | `/token`                          | RPT issuance                      |
//! | GET    | `/keys`                           | JWK set with the RPT signing key  |
//! | GET    | `/healthz`                        | liveness                          |
//!
//! A token request runs four steps in order: parse the request, determine
//! the requested permissions (ticket or direct `permissions`), verify the
//! claim token, and assess authorization with the policy engine.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Duration, Utc};
use ed25519_dalek::SigningKey;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

use crate::claims::{ClaimToken, IssuerRegistry, VerifiedClaims, Verifiers};
use crate::clock::{self, SharedClock};
use crate::engine::{self, ComplianceReport, Decision, Resolution, StateOfTheWorld};
use crate::permission::RequestedPermission;
use crate::rpt::{bearer, RptClaims, DEFAULT_RPT_TTL_SECS};
use crate::store::{Backing, PolicyStore};
use crate::ticket::{TicketError, TicketStore, DEFAULT_TICKET_TTL_SECS};
use crate::{token, UMA_GRANT_TYPE};

pub const DISCOVERY_PATH: &str = "/.well-known/uma2-configuration";

pub const ENV_LISTEN: &str = "UMA_ODRL_AS_LISTEN";
pub const ENV_SECRET: &str = "UMA_ODRL_AS_SECRET";

/// Authorization server configuration file (JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsConfig {
    pub issuer: String,
    pub listen: SocketAddr,
    pub signing_key: PathBuf,
    #[serde(default = "default_rpt_ttl")]
    pub rpt_ttl_secs: i64,
    #[serde(default = "default_ticket_ttl")]
    pub ticket_ttl_secs: i64,
    pub issuer_registry: PathBuf,
    pub policy_store: PathBuf,
    pub rs_secret: String,
}

fn default_rpt_ttl() -> i64 {
    DEFAULT_RPT_TTL_SECS
}

fn default_ticket_ttl() -> i64 {
    DEFAULT_TICKET_TTL_SECS
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    File { path: String, message: String },
    #[error("invalid {field}: {message}")]
    Invalid { field: &'static str, message: String },
    #[error(transparent)]
    Key(#[from] token::KeyError),
    #[error(transparent)]
    Registry(#[from] crate::claims::RegistryError),
    #[error(transparent)]
    Store(#[from] crate::store::StoreError),
}

impl AsConfig {
    /// Reads the config file and applies environment overrides.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let file_err = |message: String| ConfigError::File { path: path.display().to_string(), message };
        let text = std::fs::read_to_string(path).map_err(|e| file_err(e.to_string()))?;
        let mut config: AsConfig = serde_json::from_str(&text).map_err(|e| file_err(e.to_string()))?;
        // Relative paths are resolved against the config file's directory.
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for p in [&mut config.signing_key, &mut config.issuer_registry, &mut config.policy_store] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        config.apply_env()?;
        Ok(config)
    }

    fn apply_env(&mut self) -> Result<(), ConfigError> {
        if let Ok(listen) = std::env::var(ENV_LISTEN) {
            self.listen = listen.parse().map_err(|e: std::net::AddrParseError| ConfigError::Invalid {
                field: ENV_LISTEN,
                message: e.to_string(),
            })?;
        }
        if let Ok(secret) = std::env::var(ENV_SECRET) {
            self.rs_secret = secret;
        }
        Ok(())
    }

    /// Loads keys, registry and policies and builds the server.
    pub fn build(&self) -> Result<AuthorizationServer, ConfigError> {
        if self.rpt_ttl_secs <= 0 || self.ticket_ttl_secs <= 0 {
            return Err(ConfigError::Invalid { field: "ttl", message: "must be positive".into() });
        }
        if !crate::iri::is_absolute_iri(&self.issuer) {
            return Err(ConfigError::Invalid { field: "issuer", message: "must be an absolute IRI".into() });
        }
        let key = token::read_signing_key(&self.signing_key)?;
        let registry = IssuerRegistry::load(&self.issuer_registry)?;
        let policies = PolicyStore::open(&self.policy_store)?;
        Ok(AuthorizationServer::new(&self.issuer, key, Arc::new(policies), registry, &self.rs_secret)
            .with_rpt_ttl(Duration::seconds(self.rpt_ttl_secs))
            .with_ticket_ttl(Duration::seconds(self.ticket_ttl_secs)))
    }
}

/// Parsed token-endpoint request.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenRequest {
    pub grant_type: String,
    pub ticket: Option<String>,
    pub permissions: Option<Vec<RequestedPermission>>,
    pub claim_token: Option<ClaimToken>,
}

impl TokenRequest {
    /// Form-encoded body as sent by the client (`permissions` is JSON text).
    pub fn to_form(&self) -> Vec<(&'static str, String)> {
        let mut form = vec![("grant_type", self.grant_type.clone())];
        if let Some(t) = &self.ticket {
            form.push(("ticket", t.clone()));
        }
        if let Some(p) = &self.permissions {
            form.push(("permissions", serde_json::to_string(p).expect("permissions json")));
        }
        if let Some(c) = &self.claim_token {
            form.push(("claim_token", c.raw.clone()));
            form.push(("claim_token_format", c.format.clone()));
        }
        form
    }

    /// JSON body equivalent of [`TokenRequest::to_form`].
    pub fn to_json(&self) -> Value {
        let mut m = serde_json::Map::new();
        m.insert("grant_type".into(), Value::String(self.grant_type.clone()));
        if let Some(t) = &self.ticket {
            m.insert("ticket".into(), Value::String(t.clone()));
        }
        if let Some(p) = &self.permissions {
            m.insert("permissions".into(), serde_json::to_value(p).expect("permissions json"));
        }
        if let Some(c) = &self.claim_token {
            m.insert("claim_token".into(), Value::String(c.raw.clone()));
            m.insert("claim_token_format".into(), Value::String(c.format.clone()));
        }
        Value::Object(m)
    }
}

/// Successful token response body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenResponse {
    pub access_token: String,
    pub token_type: String,
}

/// OAuth-style error outcome of the token or permission endpoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AsError {
    InvalidRequest(String),
    InvalidGrant(String),
    /// Claims are missing or did not verify; carries a fresh ticket.
    NeedInfo { ticket: String, formats: Vec<String> },
    RequestDenied,
    Unauthorized,
    Server(String),
}

impl AsError {
    pub fn status(&self) -> StatusCode {
        match self {
            AsError::InvalidRequest(_) | AsError::InvalidGrant(_) => StatusCode::BAD_REQUEST,
            AsError::NeedInfo { .. } | AsError::RequestDenied => StatusCode::FORBIDDEN,
            AsError::Unauthorized => StatusCode::UNAUTHORIZED,
            AsError::Server(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn body(&self) -> Value {
        match self {
            AsError::InvalidRequest(d) => json!({"error": "invalid_request", "error_description": d}),
            AsError::InvalidGrant(d) => json!({"error": "invalid_grant", "error_description": d}),
            AsError::NeedInfo { ticket, formats } => json!({
                "error": "need_info",
                "ticket": ticket,
                "required_claims": [{"claim_token_format": formats}],
            }),
            AsError::RequestDenied => json!({"error": "request_denied"}),
            AsError::Unauthorized => json!({"error": "invalid_token"}),
            AsError::Server(_) => json!({"error": "server_error"}),
        }
    }
}

impl IntoResponse for AsError {
    fn into_response(self) -> Response {
        if let AsError::Server(m) = &self {
            tracing::error!("authorization server error: {m}");
        }
        let mut resp = (self.status(), Json(self.body())).into_response();
        resp.headers_mut().insert(header::CACHE_CONTROL, HeaderValue::from_static("no-store"));
        if matches!(self, AsError::Unauthorized) {
            resp.headers_mut().insert(header::WWW_AUTHENTICATE, HeaderValue::from_static("Bearer"));
        }
        resp
    }
}

pub struct AuthorizationServer {
    issuer: String,
    signing_key: SigningKey,
    rpt_ttl: Duration,
    tickets: TicketStore,
    policies: Arc<PolicyStore>,
    registry: IssuerRegistry,
    verifiers: Verifiers,
    rs_secret: String,
    clock: SharedClock,
    resolution: Resolution,
}

impl std::fmt::Debug for AuthorizationServer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AuthorizationServer")
            .field("issuer", &self.issuer)
            .field("policies", &self.policies.len())
            .field("tickets", &self.tickets.len())
            .finish_non_exhaustive()
    }
}

impl AuthorizationServer {
    pub fn new(
        issuer: &str,
        signing_key: SigningKey,
        policies: Arc<PolicyStore>,
        registry: IssuerRegistry,
        rs_secret: &str,
    ) -> Self {
        Self {
            issuer: issuer.trim_end_matches('/').to_string(),
            signing_key,
            rpt_ttl: Duration::seconds(DEFAULT_RPT_TTL_SECS),
            tickets: TicketStore::default(),
            policies,
            registry,
            verifiers: Verifiers::default(),
            rs_secret: rs_secret.to_string(),
            clock: clock::system(),
            resolution: Resolution::default(),
        }
    }

    pub fn with_clock(mut self, clock: SharedClock) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_rpt_ttl(mut self, ttl: Duration) -> Self {
        self.rpt_ttl = ttl;
        self
    }

    pub fn with_ticket_ttl(mut self, ttl: Duration) -> Self {
        self.tickets = TicketStore::new(ttl);
        self
    }

    pub fn with_verifiers(mut self, verifiers: Verifiers) -> Self {
        self.verifiers = verifiers;
        self
    }

    pub fn with_resolution(mut self, resolution: Resolution) -> Self {
        self.resolution = resolution;
        self
    }

    pub fn issuer(&self) -> &str {
        &self.issuer
    }

    pub fn tickets(&self) -> &TicketStore {
        &self.tickets
    }

    pub fn policies(&self) -> &Arc<PolicyStore> {
        &self.policies
    }

    pub fn verifying_key(&self) -> ed25519_dalek::VerifyingKey {
        self.signing_key.verifying_key()
    }

    pub fn discovery(&self) -> Value {
        json!({
            "issuer": self.issuer,
            "token_endpoint": format!("{}/token", self.issuer),
            "permission_endpoint": format!("{}/permission", self.issuer),
            "jwks_uri": format!("{}/keys", self.issuer),
            "claim_token_formats_supported": self.verifiers.formats(),
        })
    }

    fn rs_authenticated(&self, bearer: Option<&str>) -> bool {
        bearer.is_some_and(|secret| constant_time_eq(secret.as_bytes(), self.rs_secret.as_bytes()))
    }

    /// Issues a ticket for the resource server. `bearer` is the secret taken
    /// from the `Authorization` header.
    pub fn register_permissions(
        &self,
        bearer: Option<&str>,
        requested: Vec<RequestedPermission>,
    ) -> Result<String, AsError> {
        if !self.rs_authenticated(bearer) {
            return Err(AsError::Unauthorized);
        }
        for p in &requested {
            p.validate().map_err(|e| AsError::InvalidRequest(e.to_string()))?;
        }
        let now = self.clock.now();
        self.tickets
            .issue(requested, now)
            .map(|t| t.ticket)
            .map_err(|_| AsError::InvalidRequest("permission list must not be empty".into()))
    }

    /// Runs the token pipeline.
    pub fn token(&self, req: TokenRequest) -> Result<TokenResponse, AsError> {
        let now = self.clock.now();

        // 1. parse
        if req.grant_type != UMA_GRANT_TYPE {
            return Err(AsError::InvalidGrant(format!("grant_type must be {UMA_GRANT_TYPE}")));
        }
        // 2. requested permissions
        let requested = match (req.ticket, req.permissions) {
            (Some(_), Some(_)) | (None, None) => {
                return Err(AsError::InvalidGrant("exactly one of ticket or permissions is required".into()))
            }
            (Some(ticket), None) => self.tickets.resolve(&ticket, now).map_err(|e| {
                AsError::InvalidGrant(match e {
                    TicketError::UnknownTicket => "unknown ticket",
                    TicketError::ExpiredTicket => "ticket expired",
                    TicketError::ConsumedTicket => "ticket already used",
                    TicketError::EmptyRequest => "ticket has no permissions",
                }
                .into())
            })?,
            (None, Some(perms)) => {
                if perms.is_empty() {
                    return Err(AsError::InvalidGrant("permissions must not be empty".into()));
                }
                for p in &perms {
                    p.validate().map_err(|e| AsError::InvalidGrant(e.to_string()))?;
                }
                perms
            }
        };
        // 3. claims
        let claims = match req.claim_token.as_ref().map(|t| self.verifiers.verify(t, &self.registry, now)) {
            Some(Ok(claims)) => claims,
            outcome => {
                if let Some(Err(e)) = outcome {
                    tracing::debug!("claim verification failed: {e}");
                }
                return Err(self.need_info(requested, now));
            }
        };
        // 4. assessment
        let decision = self.assess(&claims, &requested, now)?;
        if decision.is_empty() {
            return Err(AsError::RequestDenied);
        }
        Ok(TokenResponse {
            access_token: self.sign_rpt(&decision, &claims, now),
            token_type: "Bearer".into(),
        })
    }

    fn need_info(&self, requested: Vec<RequestedPermission>, now: DateTime<Utc>) -> AsError {
        match self.tickets.issue(requested, now) {
            Ok(t) => AsError::NeedInfo { ticket: t.ticket, formats: self.verifiers.formats() },
            Err(e) => AsError::Server(e.to_string()),
        }
    }

    fn assess(
        &self,
        claims: &VerifiedClaims,
        requested: &[RequestedPermission],
        now: DateTime<Utc>,
    ) -> Result<Decision, AsError> {
        self.explain(claims, requested, now).map(|(d, _)| d)
    }

    /// Decision plus the compliance reports behind it. Never exposed over
    /// HTTP.
    pub fn explain(
        &self,
        claims: &VerifiedClaims,
        requested: &[RequestedPermission],
        now: DateTime<Utc>,
    ) -> Result<(Decision, Vec<ComplianceReport>), AsError> {
        if let Backing::File(_) = self.policies.backing() {
            self.policies.reload().map_err(|e| AsError::Server(e.to_string()))?;
        }
        let snapshot = self.policies.snapshot();
        engine::grant_with_reports(&snapshot, claims, requested, &StateOfTheWorld::at(now), self.resolution)
            .map_err(|e| AsError::InvalidGrant(e.to_string()))
    }

    /// Signs an RPT carrying exactly `decision.granted`.
    pub fn sign_rpt(&self, decision: &Decision, claims: &VerifiedClaims, now: DateTime<Utc>) -> String {
        debug_assert!(!decision.granted.is_empty());
        RptClaims::new(&self.issuer, &claims.webid, decision.granted_permissions(), now, self.rpt_ttl)
            .sign(&self.signing_key)
    }

    pub fn router(self: Arc<Self>) -> Router {
        Router::new()
            .route(DISCOVERY_PATH, get(discovery_handler))
            .route("/keys", get(keys_handler))
            .route("/permission", post(permission_handler))
            .route("/token", post(token_handler))
            .route("/healthz", get(|| async { "ok" }))
            .with_state(self)
    }
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

type Shared = Arc<AuthorizationServer>;

async fn discovery_handler(State(server): State<Shared>) -> Json<Value> {
    Json(server.discovery())
}

async fn keys_handler(State(server): State<Shared>) -> Json<Value> {
    Json(token::jwks(&server.verifying_key()))
}

fn is_json(headers: &HeaderMap) -> bool {
    headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|ct| {
            let mime = ct.split(';').next().unwrap_or("").trim();
            mime.eq_ignore_ascii_case("application/json") || mime.ends_with("+json")
        })
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    Many(Vec<RequestedPermission>),
    One(RequestedPermission),
}

async fn permission_handler(State(server): State<Shared>, headers: HeaderMap, body: Bytes) -> Response {
    let secret = bearer(&headers);
    if !server.rs_authenticated(secret) {
        return AsError::Unauthorized.into_response();
    }
    let requested = match serde_json::from_slice::<OneOrMany>(&body) {
        Ok(OneOrMany::Many(v)) => v,
        Ok(OneOrMany::One(p)) => vec![p],
        Err(e) => return AsError::InvalidRequest(format!("invalid permission body: {e}")).into_response(),
    };
    match server.register_permissions(secret, requested) {
        Ok(ticket) => (StatusCode::CREATED, Json(json!({ "ticket": ticket }))).into_response(),
        Err(e) => e.into_response(),
    }
}

/// Decodes a token request from a form or JSON body.
pub fn parse_token_request(headers: &HeaderMap, body: &[u8]) -> Result<TokenRequest, AsError> {
    let fields: serde_json::Map<String, Value> = if is_json(headers) {
        match serde_json::from_slice::<Value>(body) {
            Ok(Value::Object(m)) => m,
            _ => return Err(AsError::InvalidRequest("body must be a JSON object".into())),
        }
    } else {
        let pairs: Vec<(String, String)> = serde_urlencoded::from_bytes(body)
            .map_err(|e| AsError::InvalidRequest(format!("invalid form body: {e}")))?;
        let mut m = serde_json::Map::new();
        for (k, v) in pairs {
            if m.insert(k.clone(), Value::String(v)).is_some() {
                return Err(AsError::InvalidRequest(format!("duplicate parameter {k}")));
            }
        }
        m
    };
    let text = |name: &str| -> Result<Option<String>, AsError> {
        match fields.get(name) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(AsError::InvalidRequest(format!("{name} must be a string"))),
        }
    };
    let permissions = match fields.get("permissions") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(
            serde_json::from_str::<Vec<RequestedPermission>>(s)
                .map_err(|e| AsError::InvalidRequest(format!("invalid permissions: {e}")))?,
        ),
        Some(v) => Some(
            serde_json::from_value::<Vec<RequestedPermission>>(v.clone())
                .map_err(|e| AsError::InvalidRequest(format!("invalid permissions: {e}")))?,
        ),
    };
    let claim_token = text("claim_token")?
        .map(|raw| Ok::<_, AsError>(ClaimToken::new(raw, text("claim_token_format")?.unwrap_or_default())))
        .transpose()?;
    Ok(TokenRequest {
        grant_type: text("grant_type")?.unwrap_or_default(),
        ticket: text("ticket")?,
        permissions,
        claim_token,
    })
}

async fn token_handler(State(server): State<Shared>, headers: HeaderMap, body: Bytes) -> Response {
    let result = parse_token_request(&headers, &body).and_then(|req| server.token(req));
    match result {
        Ok(resp) => {
            let mut r = (StatusCode::OK, Json(resp)).into_response();
            r.headers_mut().insert(header::CACHE_CONTROL, HeaderValue::from_static("no-store"));
            r
        }
        Err(e) => e.into_response(),
    }
}

/// Serves the authorization server on an already bound listener. Expired
/// and consumed tickets are purged once a minute.
pub fn spawn(server: Arc<AuthorizationServer>, listener: TcpListener) -> JoinHandle<std::io::Result<()>> {
    let purger = Arc::clone(&server);
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(std::time::Duration::from_secs(60));
        loop {
            tick.tick().await;
            let removed = purger.tickets.purge(purger.clock.now());
            if removed > 0 {
                tracing::debug!("purged {removed} tickets");
            }
            if Arc::strong_count(&purger) == 1 {
                break;
            }
        }
    });
    tokio::spawn(async move { axum::serve(listener, server.router()).await })
}

/// Binds `config.listen` and serves until the process ends.
pub async fn serve(config: &AsConfig) -> Result<(), Box<dyn std::error::Error + Send + Sync>> {
    let server = Arc::new(config.build()?);
    let listener = TcpListener::bind(config.listen).await?;
    tracing::info!("authorization server {} listening on {}", server.issuer(), listener.local_addr()?);
    spawn(server, listener).await??;
    Ok(())
}
