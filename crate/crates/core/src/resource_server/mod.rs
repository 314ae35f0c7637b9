//! UMA resource server over a hierarchical document store.
//!
//! The server holds no policies. For every request the authorizer
//!
//! 1. computes the permissions the operation requires ([`mapping`]),
//! 2. checks them against the bearer RPT, if any (signature against the
//!    AS key fetched once at startup, issuer, expiry, scope inclusion),
//! 3. otherwise asks the AS for a ticket covering exactly those
//!    permissions and answers `401` with
//!    `WWW-Authenticate: UMA realm="rs", as_uri="...", ticket="..."`.
//!
//! Unauthorized requests never learn whether a resource exists: a missing
//! path still yields `401` + ticket, and `404` only follows authorization.

pub mod mapping;
pub mod storage;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::{DefaultBodyLimit, State};
use axum::http::{header, HeaderMap, HeaderValue, Method as HttpMethod, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use chrono::{DateTime, Utc};
use ed25519_dalek::VerifyingKey;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

use crate::clock::{self, SharedClock};
use crate::permission::{actions, RequestedPermission};
use crate::rpt::{self, RptClaims};
use crate::token;

use mapping::{Method, ResourcePath};
use storage::{Resource, ResourceManager, StorageError};

pub const DEFAULT_MAX_BODY_BYTES: usize = 10 * 1024 * 1024;
pub const ENV_LISTEN: &str = "UMA_ODRL_RS_LISTEN";
pub const ENV_SECRET: &str = "UMA_ODRL_RS_SECRET";
const DISCOVERY_PATH: &str = "/.well-known/uma2-configuration";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RsConfig {
    pub listen: SocketAddr,
    /// Public base URL used to build resource identifiers. Defaults to
    /// `http://<listen>`.
    #[serde(default)]
    pub base_url: Option<String>,
    pub as_uri: String,
    pub rs_secret: String,
    pub storage_root: PathBuf,
    /// Path prefixes readable with GET without a token.
    #[serde(default)]
    pub public_prefixes: Vec<String>,
    #[serde(default = "default_max_body")]
    pub max_body_bytes: usize,
}

fn default_max_body() -> usize {
    DEFAULT_MAX_BODY_BYTES
}

#[derive(Debug, Error)]
pub enum RsError {
    #[error("cannot read config {path}: {message}")]
    Config { path: String, message: String },
    #[error("authorization server {uri} unreachable: {message}")]
    AsUnreachable { uri: String, message: String },
    #[error("authorization server {uri} returned an unusable response: {message}")]
    AsProtocol { uri: String, message: String },
    #[error(transparent)]
    Storage(#[from] StorageError),
}

impl RsConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, RsError> {
        let path = path.as_ref();
        let err = |message: String| RsError::Config { path: path.display().to_string(), message };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let mut config: RsConfig = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        if config.storage_root.is_relative() {
            config.storage_root = path.parent().unwrap_or_else(|| Path::new(".")).join(&config.storage_root);
        }
        if let Ok(listen) = std::env::var(ENV_LISTEN) {
            config.listen = listen.parse().map_err(|e: std::net::AddrParseError| err(format!("{ENV_LISTEN}: {e}")))?;
        }
        if let Ok(secret) = std::env::var(ENV_SECRET) {
            config.rs_secret = secret;
        }
        Ok(config)
    }

    pub fn base_url(&self, bound: SocketAddr) -> String {
        self.base_url
            .clone()
            .unwrap_or_else(|| format!("http://{bound}"))
            .trim_end_matches('/')
            .to_string()
    }
}

/// What the resource server learned from the AS discovery document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AsEndpoints {
    pub issuer: String,
    pub permission_endpoint: String,
    pub key: VerifyingKey,
}

pub(crate) fn http_client() -> reqwest::Client {
    reqwest::Client::builder()
        .no_proxy()
        .timeout(std::time::Duration::from_secs(10))
        .build()
        .expect("http client")
}

/// Fetches the discovery document and the AS verification key.
pub async fn discover(as_uri: &str, http: &reqwest::Client) -> Result<AsEndpoints, RsError> {
    let as_uri = as_uri.trim_end_matches('/');
    let unreachable = |e: reqwest::Error| RsError::AsUnreachable { uri: as_uri.to_string(), message: e.to_string() };
    let protocol = |message: String| RsError::AsProtocol { uri: as_uri.to_string(), message };
    let doc: Value = http
        .get(format!("{as_uri}{DISCOVERY_PATH}"))
        .send()
        .await
        .map_err(unreachable)?
        .error_for_status()
        .map_err(unreachable)?
        .json()
        .await
        .map_err(|e| protocol(e.to_string()))?;
    let field = |name: &str| {
        doc.get(name)
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| protocol(format!("discovery document lacks {name}")))
    };
    let issuer = field("issuer")?;
    let permission_endpoint = field("permission_endpoint")?;
    let jwks_uri = field("jwks_uri")?;
    let jwks: Value = http
        .get(&jwks_uri)
        .send()
        .await
        .map_err(unreachable)?
        .error_for_status()
        .map_err(unreachable)?
        .json()
        .await
        .map_err(|e| protocol(e.to_string()))?;
    let key = token::key_from_jwks(&jwks).map_err(|e| protocol(e.to_string()))?;
    Ok(AsEndpoints { issuer, permission_endpoint, key })
}

/// Outcome of the authorizer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AuthOutcome {
    /// Carries the RPT subject, or `None` for public reads.
    Authorized(Option<String>),
    Challenge { ticket: String, as_uri: String },
}

impl AuthOutcome {
    /// The exact `WWW-Authenticate` value for a challenge.
    pub fn www_authenticate(&self) -> Option<String> {
        match self {
            AuthOutcome::Challenge { ticket, as_uri } => {
                Some(format!(r#"UMA realm="rs", as_uri="{as_uri}", ticket="{ticket}""#))
            }
            AuthOutcome::Authorized(_) => None,
        }
    }
}

#[derive(Debug)]
pub struct ResourceServer {
    base_url: String,
    endpoints: AsEndpoints,
    secret: String,
    storage: ResourceManager,
    http: reqwest::Client,
    clock: SharedClock,
    public_prefixes: Vec<String>,
    max_body_bytes: usize,
}

impl ResourceServer {
    pub fn new(base_url: &str, endpoints: AsEndpoints, secret: &str, storage: ResourceManager) -> Self {
        Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            endpoints,
            secret: secret.to_string(),
            storage,
            http: http_client(),
            clock: clock::system(),
            public_prefixes: Vec::new(),
            max_body_bytes: DEFAULT_MAX_BODY_BYTES,
        }
    }

    /// Discovers the AS named in `config` and opens the storage root.
    pub async fn connect(config: &RsConfig, base_url: &str) -> Result<Self, RsError> {
        let http = http_client();
        let endpoints = discover(&config.as_uri, &http).await?;
        let storage = ResourceManager::open(&config.storage_root)?;
        let mut rs = Self::new(base_url, endpoints, &config.rs_secret, storage);
        rs.public_prefixes = config.public_prefixes.clone();
        rs.max_body_bytes = config.max_body_bytes;
        Ok(rs)
    }

    pub fn with_clock(mut self, clock: SharedClock) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_public_prefixes(mut self, prefixes: Vec<String>) -> Self {
        self.public_prefixes = prefixes;
        self
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    pub fn storage(&self) -> &ResourceManager {
        &self.storage
    }

    pub fn endpoints(&self) -> &AsEndpoints {
        &self.endpoints
    }

    pub fn resource_iri(&self, path: &ResourcePath) -> String {
        mapping::resource_iri(&self.base_url, path)
    }

    /// Validates a bearer RPT: signature, issuer and expiry.
    pub fn validate_rpt(&self, raw: &str, now: DateTime<Utc>) -> Result<RptClaims, rpt::RptError> {
        rpt::validate(raw, &self.endpoints.key, &self.endpoints.issuer, now)
    }

    /// Obtains a ticket for `required` from the AS permission endpoint.
    pub async fn request_ticket(&self, required: &[RequestedPermission]) -> Result<String, RsError> {
        let uri = &self.endpoints.permission_endpoint;
        let unreachable = |message: String| RsError::AsUnreachable { uri: uri.clone(), message };
        let resp = self
            .http
            .post(uri)
            .bearer_auth(&self.secret)
            .json(required)
            .send()
            .await
            .map_err(|e| unreachable(e.to_string()))?;
        if resp.status() != reqwest::StatusCode::CREATED {
            return Err(RsError::AsProtocol {
                uri: uri.clone(),
                message: format!("permission endpoint answered {}", resp.status()),
            });
        }
        let body: Value = resp.json().await.map_err(|e| unreachable(e.to_string()))?;
        body.get("ticket")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| RsError::AsProtocol { uri: uri.clone(), message: "no ticket in response".into() })
    }

    fn is_public(&self, method: Method, path: &ResourcePath) -> bool {
        method == Method::Get && self.public_prefixes.iter().any(|p| path.as_str().starts_with(p.as_str()))
    }

    /// Authorizes `required` given an already validated token (if any).
    pub async fn authorize(
        &self,
        token: Option<&RptClaims>,
        required: &[RequestedPermission],
    ) -> Result<AuthOutcome, RsError> {
        if let Some(t) = token {
            if t.covers(required) {
                return Ok(AuthOutcome::Authorized(Some(t.sub.clone())));
            }
        }
        let ticket = self.request_ticket(required).await?;
        Ok(AuthOutcome::Challenge { ticket, as_uri: self.endpoints.issuer.clone() })
    }

    /// Picks the name of the document a POST creates: a `create` grant in
    /// the presented token for a fresh direct child of the container, or a
    /// new UUID.
    fn post_child_name(&self, container: &ResourcePath, token: Option<&RptClaims>) -> String {
        let prefix = self.resource_iri(container);
        token
            .into_iter()
            .flat_map(|t| t.permissions.iter())
            .filter(|p| p.access_rights.contains(actions::CREATE))
            .filter_map(|p| p.resource.strip_prefix(&prefix))
            .filter_map(|name| container.child(name).ok())
            .find(|child| !child.is_container() && !self.storage.exists(child))
            .map(|child| child.name().to_string())
            .unwrap_or_else(|| uuid::Uuid::new_v4().to_string())
    }

    /// Handles one HTTP request end to end.
    pub async fn handle(&self, method: &HttpMethod, uri: &Uri, headers: &HeaderMap, body: Bytes) -> Response {
        let Ok(method) = method.as_str().parse::<Method>() else {
            return method_not_allowed();
        };
        let Ok(path) = ResourcePath::parse(uri.path()) else {
            return (StatusCode::BAD_REQUEST, "invalid resource path").into_response();
        };
        let now = self.clock.now();
        let token = rpt::bearer(headers).and_then(|raw| self.validate_rpt(raw, now).ok());

        let new_child = (method == Method::Post && path.is_container())
            .then(|| self.post_child_name(&path, token.as_ref()));
        let exists = method == Method::Put && self.storage.exists(&path);
        let required = match mapping::required_permissions(method, &self.base_url, &path, exists, new_child.as_deref()) {
            Ok(r) => r,
            Err(_) => return method_not_allowed(),
        };

        let outcome = if self.is_public(method, &path) {
            Ok(AuthOutcome::Authorized(None))
        } else {
            self.authorize(token.as_ref(), &required).await
        };
        match outcome {
            Ok(AuthOutcome::Authorized(_)) => {}
            Ok(challenge) => {
                let value = challenge.www_authenticate().expect("challenge");
                let mut resp = StatusCode::UNAUTHORIZED.into_response();
                resp.headers_mut().insert(
                    header::WWW_AUTHENTICATE,
                    HeaderValue::from_str(&value).expect("header-safe ticket"),
                );
                return resp;
            }
            Err(e) => {
                tracing::warn!("authorization failed closed: {e}");
                return (StatusCode::BAD_GATEWAY, "authorization server unavailable").into_response();
            }
        }

        let content_type = headers
            .get(header::CONTENT_TYPE)
            .and_then(|v| v.to_str().ok())
            .unwrap_or(storage::DEFAULT_CONTENT_TYPE)
            .to_string();
        let result = match method {
            Method::Get | Method::Head => self.storage.read(&path).map(|r| self.render(r, method == Method::Head)),
            Method::Put => self.storage.write(&path, &body, &content_type).map(|created| {
                if created {
                    let mut r = StatusCode::CREATED.into_response();
                    set_location(&mut r, &self.resource_iri(&path));
                    r
                } else {
                    StatusCode::NO_CONTENT.into_response()
                }
            }),
            Method::Patch => {
                if path.is_container() {
                    Err(StorageError::Conflict { path: path.to_string(), reason: "containers cannot be patched" })
                } else if !self.storage.exists(&path) {
                    Err(StorageError::NotFound(path.to_string()))
                } else {
                    self.storage.write(&path, &body, &content_type).map(|_| StatusCode::NO_CONTENT.into_response())
                }
            }
            Method::Post => {
                let child = path.child(new_child.as_deref().expect("post child")).expect("valid child");
                if !self.storage.exists(&path) {
                    Err(StorageError::NotFound(path.to_string()))
                } else {
                    self.storage.create(&child, &body, &content_type).map(|()| {
                        let mut r = StatusCode::CREATED.into_response();
                        set_location(&mut r, &self.resource_iri(&child));
                        r
                    })
                }
            }
            Method::Delete => self.storage.remove(&path).map(|()| StatusCode::NO_CONTENT.into_response()),
        };
        result.unwrap_or_else(storage_error_response)
    }

    fn render(&self, resource: Resource, head: bool) -> Response {
        let (bytes, content_type) = match resource {
            Resource::Document { body, content_type } => (body, content_type),
            Resource::Container { members } => {
                let iris: Vec<String> = members.iter().map(|m| self.resource_iri(m)).collect();
                (serde_json::to_vec(&iris).expect("listing json"), "application/json".to_string())
            }
        };
        let len = bytes.len();
        let mut resp = if head { Response::new(Body::empty()) } else { Response::new(Body::from(bytes)) };
        if let Ok(v) = HeaderValue::from_str(&content_type) {
            resp.headers_mut().insert(header::CONTENT_TYPE, v);
        }
        resp.headers_mut().insert(header::CONTENT_LENGTH, HeaderValue::from(len));
        resp
    }

    pub fn router(self: Arc<Self>) -> Router {
        let limit = self.max_body_bytes;
        Router::new()
            .route("/healthz", get(|| async { "ok" }))
            .fallback(handler)
            .layer(DefaultBodyLimit::max(limit))
            .with_state(self)
    }
}

fn set_location(resp: &mut Response, iri: &str) {
    if let Ok(v) = HeaderValue::from_str(iri) {
        resp.headers_mut().insert(header::LOCATION, v);
    }
}

fn method_not_allowed() -> Response {
    let mut r = StatusCode::METHOD_NOT_ALLOWED.into_response();
    r.headers_mut()
        .insert(header::ALLOW, HeaderValue::from_static("GET, HEAD, PUT, POST, PATCH, DELETE"));
    r
}

fn storage_error_response(e: StorageError) -> Response {
    match e {
        StorageError::NotFound(_) => StatusCode::NOT_FOUND.into_response(),
        StorageError::Conflict { reason, .. } => (StatusCode::CONFLICT, reason).into_response(),
        StorageError::Io { .. } => {
            tracing::error!("storage failure: {e}");
            StatusCode::INTERNAL_SERVER_ERROR.into_response()
        }
    }
}

async fn handler(
    State(server): State<Arc<ResourceServer>>,
    method: HttpMethod,
    uri: Uri,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    server.handle(&method, &uri, &headers, body).await
}

pub fn spawn(server: Arc<ResourceServer>, listener: TcpListener) -> JoinHandle<std::io::Result<()>> {
    tokio::spawn(async move { axum::serve(listener, server.router()).await })
}

/// Connects to the AS, binds `config.listen` and serves until the process
/// ends.
pub async fn serve(config: &RsConfig) -> Result<(), Box<dyn std::error::Error + Send + Sync>> {
    let listener = TcpListener::bind(config.listen).await?;
    let base = config.base_url(listener.local_addr()?);
    let server = Arc::new(ResourceServer::connect(config, &base).await?);
    tracing::info!("resource server {base} using authorization server {}", server.endpoints.issuer);
    spawn(server, listener).await??;
    Ok(())
}
