//! Mint identity tokens the way an identity provider would and verify them
//! against an issuer registry.
//!
//!     cargo run --example claim_tokens

use std::collections::BTreeMap;

use chrono::{Duration, Utc};
use serde_json::Value;
use uma_odrl::claims::{self, mint_test_token, ClaimToken, IssuerRegistry};
use uma_odrl::token;

fn main() {
    let idp = token::generate_signing_key();
    let mut registry = IssuerRegistry::new();
    registry.register("https://idp.example", idp.verifying_key()).unwrap();
    println!("registry: {}", registry.to_json());

    let now = Utc::now();
    let mut extra = BTreeMap::new();
    extra.insert("purpose".to_string(), Value::from("research"));
    let good = mint_test_token("https://alice.example/id", "https://idp.example", &idp, &extra, now + Duration::minutes(5));
    println!("token: {}", good.raw);
    println!("decoded: {}", token::decode(&good.raw).unwrap().payload);
    println!("verified: {:?}", claims::verify(&good, &registry, now).unwrap());

    let stranger = token::generate_signing_key();
    let bad = [
        ("expired", mint_test_token("https://alice.example/id", "https://idp.example", &idp, &extra, now)),
        (
            "unknown issuer",
            mint_test_token("https://alice.example/id", "https://other.example", &stranger, &extra, now + Duration::minutes(5)),
        ),
        (
            "forged",
            mint_test_token("https://alice.example/id", "https://idp.example", &stranger, &extra, now + Duration::minutes(5)),
        ),
        ("wrong format", ClaimToken::new(good.raw.clone(), "urn:example:saml")),
    ];
    for (what, t) in bad {
        println!("{what}: {:?}", claims::verify(&t, &registry, now).unwrap_err());
    }
}
