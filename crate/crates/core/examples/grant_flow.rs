//! Full UMA grant flow on loopback: an authorization server, a resource
//! server and a client negotiating access, in ticket mode and direct mode.
//!
//!     cargo run --example grant_flow

use std::collections::BTreeMap;
use std::sync::Arc;

use chrono::{Duration, Utc};
use tokio::net::TcpListener;
use uma_odrl::auth_server::{self, AuthorizationServer};
use uma_odrl::claims::{mint_test_token, IssuerRegistry};
use uma_odrl::client::{FlowClient, FlowRequest};
use uma_odrl::odrl::{Policy, PolicyType, Rule};
use uma_odrl::resource_server::mapping::{Method, ResourcePath};
use uma_odrl::resource_server::storage::ResourceManager;
use uma_odrl::resource_server::{self, ResourceServer};
use uma_odrl::store::PolicyStore;
use uma_odrl::token;

const ALICE: &str = "https://alice.example/id";
const IDP: &str = "https://idp.example";

#[tokio::main]
async fn main() {
    let idp = token::generate_signing_key();
    let mut registry = IssuerRegistry::new();
    registry.register(IDP, idp.verifying_key()).unwrap();
    let policies = Arc::new(PolicyStore::in_memory());

    let as_listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let as_uri = format!("http://{}", as_listener.local_addr().unwrap());
    let auth = AuthorizationServer::new(&as_uri, token::generate_signing_key(), policies.clone(), registry, "rs-secret");
    auth_server::spawn(Arc::new(auth), as_listener);

    let dir = tempfile::tempdir().unwrap();
    let storage = ResourceManager::open(dir.path()).unwrap();
    storage.write(&ResourcePath::parse("/notes/").unwrap(), b"", "").unwrap();
    storage.write(&ResourcePath::parse("/notes/today").unwrap(), b"buy milk", "text/plain").unwrap();
    let rs_listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let rs_base = format!("http://{}", rs_listener.local_addr().unwrap());
    let http = reqwest::Client::builder().no_proxy().build().unwrap();
    let endpoints = resource_server::discover(&as_uri, &http).await.unwrap();
    let rs = ResourceServer::new(&rs_base, endpoints, "rs-secret", storage);
    resource_server::spawn(Arc::new(rs), rs_listener);

    let doc = format!("{rs_base}/notes/today");
    policies
        .put(Policy::new(
            "urn:policy:notes",
            PolicyType::Set,
            vec![Rule::permission("urn:rule:alice-reads", &doc, "read").with_assignee(ALICE)],
        ))
        .unwrap();

    let claim = mint_test_token(ALICE, IDP, &idp, &BTreeMap::new(), Utc::now() + Duration::minutes(5));
    let client = FlowClient::new();

    println!("-- without claims");
    print!("{}", client.run(&FlowRequest::new(Method::Get, &doc)).await.to_text());
    println!("-- ticket mode");
    print!("{}", client.run(&FlowRequest::new(Method::Get, &doc).with_claim_token(claim.clone())).await.to_text());
    println!("-- direct mode");
    let direct = FlowRequest::new(Method::Get, &doc).with_claim_token(claim.clone()).direct(&as_uri, true);
    print!("{}", client.run(&direct).await.to_text());
    println!("-- write without a policy");
    let put = FlowRequest::new(Method::Put, &doc).with_body(b"buy bread".to_vec(), "text/plain").with_claim_token(claim);
    print!("{}", client.run(&put).await.to_text());
}
