//! Claim-token verification.
//!
//! Each supported `claim_token_format` has a [`ClaimVerifier`]; the only
//! built-in one handles [`IDTOKEN_FORMAT`], a compact Ed25519 token whose
//! payload carries `iss`, `exp` and `webid`. Any further payload claims
//! (such as `purpose`) are passed through as context attributed to the
//! issuer.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use ed25519_dalek::{SigningKey, VerifyingKey};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::iri;
use crate::token::{self, KeyError, TokenError};

pub const IDTOKEN_FORMAT: &str = "urn:uma-odrl:claims:idtoken";

/// Payload claims consumed by the verifier itself and not copied into
/// the context.
const RESERVED: [&str; 4] = ["iss", "exp", "iat", "webid"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimToken {
    pub raw: String,
    pub format: String,
}

impl ClaimToken {
    pub fn new(raw: impl Into<String>, format: impl Into<String>) -> Self {
        Self { raw: raw.into(), format: format.into() }
    }

    pub fn id_token(raw: impl Into<String>) -> Self {
        Self::new(raw, IDTOKEN_FORMAT)
    }
}

/// Claims that passed verification. Only constructed by a verifier.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifiedClaims {
    pub webid: String,
    pub issuer: String,
    pub context: BTreeMap<String, Value>,
    pub verified_at: DateTime<Utc>,
}

impl VerifiedClaims {
    /// Claims for a WebID vouched for by the caller. For tests and local
    /// evaluation; the token endpoint never uses this.
    pub fn trusted(webid: impl Into<String>, issuer: impl Into<String>, at: DateTime<Utc>) -> Self {
        Self {
            webid: webid.into(),
            issuer: issuer.into(),
            context: BTreeMap::new(),
            verified_at: at,
        }
    }

    pub fn with_context(mut self, name: impl Into<String>, value: impl Into<Value>) -> Self {
        self.context.insert(name.into(), value.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClaimError {
    #[error("unsupported claim token format {0:?}")]
    UnsupportedFormat(String),
    #[error("issuer {0:?} is not trusted")]
    UnknownIssuer(String),
    #[error("claim token signature is invalid")]
    BadSignature,
    #[error("claim token expired")]
    Expired,
    #[error("claim token carries no valid webid")]
    MissingWebid,
    #[error("malformed claim token: {0}")]
    Malformed(String),
}

impl From<TokenError> for ClaimError {
    fn from(e: TokenError) -> Self {
        match e {
            TokenError::BadSignature => ClaimError::BadSignature,
            TokenError::Malformed(m) => ClaimError::Malformed(m),
        }
    }
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("issuer {0} already registered with a different key")]
    KeyConflict(String),
    #[error("issuer {0:?} is not a valid IRI")]
    InvalidIssuer(String),
    #[error(transparent)]
    Key(#[from] KeyError),
    #[error("cannot read issuer registry {path}: {message}")]
    File { path: String, message: String },
}

/// Trusted claim issuers and their Ed25519 verification keys.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IssuerRegistry {
    trusted: BTreeMap<String, VerifyingKey>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegistryFile {
    issuers: Vec<RegistryEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegistryEntry {
    issuer: String,
    public_key: String,
}

impl IssuerRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers `issuer`. Re-registering the same key is a no-op; a
    /// different key is refused.
    pub fn register(&mut self, issuer: impl Into<String>, key: VerifyingKey) -> Result<(), RegistryError> {
        let issuer = issuer.into();
        if !iri::is_valid_iri(&issuer) {
            return Err(RegistryError::InvalidIssuer(issuer));
        }
        match self.trusted.get(&issuer) {
            Some(existing) if *existing != key => Err(RegistryError::KeyConflict(issuer)),
            Some(_) => Ok(()),
            None => {
                self.trusted.insert(issuer, key);
                Ok(())
            }
        }
    }

    pub fn key_for(&self, issuer: &str) -> Option<&VerifyingKey> {
        self.trusted.get(issuer)
    }

    pub fn issuers(&self) -> impl Iterator<Item = &str> {
        self.trusted.keys().map(String::as_str)
    }

    /// Reads `{"issuers":[{"issuer": IRI, "public_key": hex}, ...]}`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, RegistryError> {
        let path = path.as_ref();
        let file_err = |message: String| RegistryError::File { path: path.display().to_string(), message };
        let text = fs::read_to_string(path).map_err(|e| file_err(e.to_string()))?;
        let parsed: RegistryFile = serde_json::from_str(&text).map_err(|e| file_err(e.to_string()))?;
        let mut reg = Self::new();
        for entry in parsed.issuers {
            reg.register(entry.issuer, token::verifying_key_from_hex(&entry.public_key)?)?;
        }
        Ok(reg)
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(RegistryFile {
            issuers: self
                .trusted
                .iter()
                .map(|(issuer, key)| RegistryEntry {
                    issuer: issuer.clone(),
                    public_key: hex::encode(key.as_bytes()),
                })
                .collect(),
        })
        .expect("registry json")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(&self.to_json())?;
        text.push('\n');
        fs::write(path, text)
    }
}

/// A verifier for one `claim_token_format`.
pub trait ClaimVerifier: Send + Sync {
    fn format(&self) -> &str;
    fn verify(&self, raw: &str, registry: &IssuerRegistry, now: DateTime<Utc>) -> Result<VerifiedClaims, ClaimError>;
}

/// Verifier for the compact signed id-token format.
#[derive(Debug, Default, Clone, Copy)]
pub struct IdTokenVerifier;

impl ClaimVerifier for IdTokenVerifier {
    fn format(&self) -> &str {
        IDTOKEN_FORMAT
    }

    fn verify(&self, raw: &str, registry: &IssuerRegistry, now: DateTime<Utc>) -> Result<VerifiedClaims, ClaimError> {
        let decoded = token::decode(raw)?;
        let payload = decoded.payload.as_object().expect("decode guarantees object");
        let issuer = payload
            .get("iss")
            .and_then(Value::as_str)
            .ok_or_else(|| ClaimError::Malformed("payload has no iss".into()))?;
        let key = registry
            .key_for(issuer)
            .ok_or_else(|| ClaimError::UnknownIssuer(issuer.to_string()))?;
        decoded.verify(key)?;

        let exp = payload
            .get("exp")
            .and_then(Value::as_i64)
            .ok_or_else(|| ClaimError::Malformed("payload has no integer exp".into()))?;
        if exp <= now.timestamp() {
            return Err(ClaimError::Expired);
        }
        let webid = match payload.get("webid").and_then(Value::as_str) {
            Some(w) if iri::is_absolute_iri(w) => w.to_string(),
            _ => return Err(ClaimError::MissingWebid),
        };
        let context = payload
            .iter()
            .filter(|(k, _)| !RESERVED.contains(&k.as_str()))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        Ok(VerifiedClaims {
            webid,
            issuer: issuer.to_string(),
            context,
            verified_at: now,
        })
    }
}

/// Dispatches claim tokens to the verifier registered for their format.
#[derive(Clone)]
pub struct Verifiers {
    by_format: BTreeMap<String, Arc<dyn ClaimVerifier>>,
}

impl std::fmt::Debug for Verifiers {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.by_format.keys()).finish()
    }
}

impl Default for Verifiers {
    fn default() -> Self {
        let mut v = Self { by_format: BTreeMap::new() };
        v.add(Arc::new(IdTokenVerifier));
        v
    }
}

impl Verifiers {
    pub fn add(&mut self, verifier: Arc<dyn ClaimVerifier>) {
        self.by_format.insert(verifier.format().to_string(), verifier);
    }

    pub fn formats(&self) -> Vec<String> {
        self.by_format.keys().cloned().collect()
    }

    pub fn verify(&self, token: &ClaimToken, registry: &IssuerRegistry, now: DateTime<Utc>) -> Result<VerifiedClaims, ClaimError> {
        let verifier = self
            .by_format
            .get(&token.format)
            .ok_or_else(|| ClaimError::UnsupportedFormat(token.format.clone()))?;
        verifier.verify(&token.raw, registry, now)
    }
}

/// Verifies `token` with the built-in verifiers.
pub fn verify(token: &ClaimToken, registry: &IssuerRegistry, now: DateTime<Utc>) -> Result<VerifiedClaims, ClaimError> {
    Verifiers::default().verify(token, registry, now)
}

/// Mints an id token the way an identity provider would. Used by tests,
/// examples and the CLI in place of a real provider.
pub fn mint_test_token(
    webid: &str,
    issuer: &str,
    key: &SigningKey,
    claims: &BTreeMap<String, Value>,
    exp: DateTime<Utc>,
) -> ClaimToken {
    let mut payload = Map::new();
    for (k, v) in claims {
        if !RESERVED.contains(&k.as_str()) {
            payload.insert(k.clone(), v.clone());
        }
    }
    payload.insert("iss".into(), Value::String(issuer.to_string()));
    payload.insert("webid".into(), Value::String(webid.to_string()));
    payload.insert("exp".into(), Value::from(exp.timestamp()));
    ClaimToken::id_token(token::sign(&Value::Object(payload), key))
}

#[cfg(test)]
mod tests {
    use super::*;
    use base64::engine::general_purpose::URL_SAFE_NO_PAD;
    use base64::Engine;
    use chrono::{Duration, TimeZone};

    const ISS: &str = "https://idp.example";
    const W: &str = "https://alice.example/profile#me";

    fn now() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2025, 3, 1, 12, 0, 0).unwrap()
    }

    fn setup() -> (SigningKey, IssuerRegistry) {
        let key = SigningKey::from_bytes(&[1u8; 32]);
        let mut reg = IssuerRegistry::new();
        reg.register(ISS, key.verifying_key()).unwrap();
        (key, reg)
    }

    #[test]
    fn happy_path() {
        let (key, reg) = setup();
        let t = mint_test_token(W, ISS, &key, &BTreeMap::new(), now() + Duration::seconds(3600));
        let c = verify(&t, &reg, now()).unwrap();
        assert_eq!(c.webid, W);
        assert_eq!(c.issuer, ISS);
        assert!(c.context.is_empty());
    }

    #[test]
    fn flipped_signature_bit() {
        let (key, reg) = setup();
        let t = mint_test_token(W, ISS, &key, &BTreeMap::new(), now() + Duration::seconds(3600));
        let (rest, sig) = t.raw.rsplit_once('.').unwrap();
        let mut bytes = URL_SAFE_NO_PAD.decode(sig).unwrap();
        bytes[10] ^= 0x01;
        let tampered = ClaimToken::id_token(format!("{rest}.{}", token::b64(&bytes)));
        assert_eq!(verify(&tampered, &reg, now()), Err(ClaimError::BadSignature));
    }

    #[test]
    fn expiry_is_strict() {
        let (key, reg) = setup();
        let past = mint_test_token(W, ISS, &key, &BTreeMap::new(), now() - Duration::seconds(1));
        assert_eq!(verify(&past, &reg, now()), Err(ClaimError::Expired));
        let at = mint_test_token(W, ISS, &key, &BTreeMap::new(), now());
        assert_eq!(verify(&at, &reg, now()), Err(ClaimError::Expired));
        let after = mint_test_token(W, ISS, &key, &BTreeMap::new(), now() + Duration::seconds(1));
        assert!(verify(&after, &reg, now()).is_ok());
    }

    #[test]
    fn empty_webid_rejected() {
        let (key, reg) = setup();
        let t = mint_test_token("", ISS, &key, &BTreeMap::new(), now() + Duration::seconds(60));
        assert_eq!(verify(&t, &reg, now()), Err(ClaimError::MissingWebid));
    }

    #[test]
    fn purpose_claim_lands_in_context() {
        let (key, reg) = setup();
        let claims = BTreeMap::from([("purpose".to_string(), Value::from("research"))]);
        let t = mint_test_token(W, ISS, &key, &claims, now() + Duration::seconds(60));
        let c = verify(&t, &reg, now()).unwrap();
        assert_eq!(c.context.get("purpose"), Some(&Value::from("research")));
    }

    #[test]
    fn unknown_issuer_and_format() {
        let (key, reg) = setup();
        let t = mint_test_token(W, "https://evil.example", &key, &BTreeMap::new(), now() + Duration::seconds(60));
        assert_eq!(verify(&t, &reg, now()), Err(ClaimError::UnknownIssuer("https://evil.example".into())));
        let t = ClaimToken::new(t.raw, "urn:ietf:params:oauth:token-type:jwt");
        assert!(matches!(verify(&t, &reg, now()), Err(ClaimError::UnsupportedFormat(_))));
    }

    #[test]
    fn registry_keys_are_immutable() {
        let (_, mut reg) = setup();
        let other = SigningKey::from_bytes(&[2u8; 32]).verifying_key();
        assert!(matches!(reg.register(ISS, other), Err(RegistryError::KeyConflict(_))));
    }

    #[test]
    fn registry_file_round_trip() {
        let (_, reg) = setup();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("issuers.json");
        reg.save(&path).unwrap();
        assert_eq!(IssuerRegistry::load(&path).unwrap(), reg);
    }
}
