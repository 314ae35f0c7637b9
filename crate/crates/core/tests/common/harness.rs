//! One AS and one RS on loopback ports, sharing a manual clock.

use std::collections::BTreeMap;
use std::sync::Arc;

use chrono::{DateTime, Duration, Utc};
use ed25519_dalek::SigningKey;
use serde_json::Value;
use tempfile::TempDir;
use tokio::net::TcpListener;

use uma_odrl::auth_server::{self, AuthorizationServer};
use uma_odrl::claims::{mint_test_token, ClaimToken, IssuerRegistry};
use uma_odrl::client::{FlowClient, FlowRequest, FlowTranscript};
use uma_odrl::clock::ManualClock;
use uma_odrl::odrl::Policy;
use uma_odrl::resource_server::mapping::ResourcePath;
use uma_odrl::resource_server::storage::ResourceManager;
use uma_odrl::resource_server::{self, ResourceServer};
use uma_odrl::store::PolicyStore;

pub const IDP: &str = "https://idp.example";
pub const RS_SECRET: &str = "rs-shared-secret";
pub const AS_KEY: [u8; 32] = [3u8; 32];

pub struct Harness {
    pub auth: Arc<AuthorizationServer>,
    pub rs: Arc<ResourceServer>,
    pub as_uri: String,
    pub rs_base: String,
    pub clock: ManualClock,
    pub idp: SigningKey,
    pub policies: Arc<PolicyStore>,
    pub http: reqwest::Client,
    _storage: TempDir,
}

pub fn http() -> reqwest::Client {
    reqwest::Client::builder().no_proxy().build().unwrap()
}

impl Harness {
    pub async fn start(policies: Vec<Policy>) -> Self {
        Self::start_at(policies, super::gen::epoch()).await
    }

    pub async fn start_at(policies: Vec<Policy>, now: DateTime<Utc>) -> Self {
        let clock = ManualClock::new(now);
        let idp = SigningKey::from_bytes(&[7u8; 32]);
        let mut registry = IssuerRegistry::new();
        registry.register(IDP, idp.verifying_key()).unwrap();
        let store = Arc::new(PolicyStore::from_policies(policies).unwrap());

        let as_listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
        let as_uri = format!("http://{}", as_listener.local_addr().unwrap());
        let auth = Arc::new(
            AuthorizationServer::new(&as_uri, SigningKey::from_bytes(&AS_KEY), Arc::clone(&store), registry, RS_SECRET)
                .with_clock(Arc::new(clock.clone())),
        );
        auth_server::spawn(Arc::clone(&auth), as_listener);

        let http = http();
        let endpoints = resource_server::discover(&as_uri, &http).await.unwrap();
        let dir = tempfile::tempdir().unwrap();
        let storage = ResourceManager::open(dir.path()).unwrap();
        let rs_listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
        let rs_base = format!("http://{}", rs_listener.local_addr().unwrap());
        let rs = Arc::new(
            ResourceServer::new(&rs_base, endpoints, RS_SECRET, storage).with_clock(Arc::new(clock.clone())),
        );
        resource_server::spawn(Arc::clone(&rs), rs_listener);

        Self { auth, rs, as_uri, rs_base, clock, idp, policies: store, http, _storage: dir }
    }

    pub fn now(&self) -> DateTime<Utc> {
        use uma_odrl::clock::Clock;
        self.clock.now()
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.rs_base)
    }

    /// Claim token for `webid`, valid for an hour of harness time.
    pub fn claim(&self, webid: &str, purpose: Option<&str>) -> ClaimToken {
        let mut extra = BTreeMap::new();
        if let Some(p) = purpose {
            extra.insert("purpose".to_string(), Value::from(p));
        }
        mint_test_token(webid, IDP, &self.idp, &extra, self.now() + Duration::hours(1))
    }

    /// Creates a document (and its ancestor containers) directly in storage.
    pub fn seed(&self, path: &str, body: &str) {
        let path = ResourcePath::parse(path).unwrap();
        let mut ancestors = Vec::new();
        let mut cur = path.parent();
        while let Some(p) = cur {
            cur = p.parent();
            ancestors.push(p);
        }
        for a in ancestors.iter().rev().filter(|a| !a.is_root()) {
            self.rs.storage().write(a, b"", "").unwrap();
        }
        self.rs.storage().write(&path, body.as_bytes(), "text/plain").unwrap();
    }

    pub async fn flow(&self, req: &FlowRequest) -> FlowTranscript {
        FlowClient::new().run(req).await
    }
}
