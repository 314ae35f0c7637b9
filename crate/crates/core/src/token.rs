//! Compact Ed25519 token encoding shared by claim tokens and RPTs.
//!
//! Wire format: `b64url(header) "." b64url(payload) "." b64url(signature)`,
//! base64url without padding. The header is always the UTF-8 JSON
//! `{"alg":"EdDSA"}`; the payload is JSON with sorted keys; the signature is
//! Ed25519 over the ASCII bytes `header.payload`.

use std::fs;
use std::path::Path;

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const HEADER_JSON: &str = r#"{"alg":"EdDSA"}"#;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TokenError {
    #[error("malformed token: {0}")]
    Malformed(String),
    #[error("signature verification failed")]
    BadSignature,
}

#[derive(Debug, Error)]
pub enum KeyError {
    #[error("cannot read key file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid key material: {0}")]
    Invalid(String),
}

/// Token split into its decoded parts, signature not yet checked.
#[derive(Debug, Clone)]
pub struct DecodedToken {
    pub header: Value,
    pub payload: Value,
    signing_input: String,
    signature: Signature,
}

impl DecodedToken {
    pub fn verify(&self, key: &VerifyingKey) -> Result<(), TokenError> {
        key.verify(self.signing_input.as_bytes(), &self.signature)
            .map_err(|_| TokenError::BadSignature)
    }
}

pub fn b64(bytes: &[u8]) -> String {
    URL_SAFE_NO_PAD.encode(bytes)
}

fn unb64(part: &str, what: &str) -> Result<Vec<u8>, TokenError> {
    URL_SAFE_NO_PAD
        .decode(part)
        .map_err(|e| TokenError::Malformed(format!("{what} is not base64url: {e}")))
}

/// Signs `payload` (must be a JSON object) into a compact token.
pub fn sign(payload: &Value, key: &SigningKey) -> String {
    debug_assert!(payload.is_object());
    let payload = serde_json::to_vec(payload).expect("json value");
    let signing_input = format!("{}.{}", b64(HEADER_JSON.as_bytes()), b64(&payload));
    let sig = key.sign(signing_input.as_bytes());
    format!("{signing_input}.{}", b64(&sig.to_bytes()))
}

/// Splits and decodes a token without checking the signature.
pub fn decode(token: &str) -> Result<DecodedToken, TokenError> {
    let mut parts = token.split('.');
    let (Some(h), Some(p), Some(s), None) = (parts.next(), parts.next(), parts.next(), parts.next())
    else {
        return Err(TokenError::Malformed("expected three dot-separated parts".into()));
    };
    let header: Value = serde_json::from_slice(&unb64(h, "header")?)
        .map_err(|e| TokenError::Malformed(format!("header is not JSON: {e}")))?;
    if header.get("alg").and_then(Value::as_str) != Some("EdDSA") {
        return Err(TokenError::Malformed("header alg must be EdDSA".into()));
    }
    let payload: Value = serde_json::from_slice(&unb64(p, "payload")?)
        .map_err(|e| TokenError::Malformed(format!("payload is not JSON: {e}")))?;
    if !payload.is_object() {
        return Err(TokenError::Malformed("payload must be a JSON object".into()));
    }
    let sig_bytes: [u8; 64] = unb64(s, "signature")?
        .try_into()
        .map_err(|_| TokenError::Malformed("signature must be 64 bytes".into()))?;
    Ok(DecodedToken {
        header,
        payload,
        signing_input: format!("{h}.{p}"),
        signature: Signature::from_bytes(&sig_bytes),
    })
}

/// Decodes and checks the signature, returning the payload.
pub fn verify(token: &str, key: &VerifyingKey) -> Result<Value, TokenError> {
    let decoded = decode(token)?;
    decoded.verify(key)?;
    Ok(decoded.payload)
}

pub fn generate_signing_key() -> SigningKey {
    SigningKey::generate(&mut rand::rngs::OsRng)
}

pub fn signing_key_from_hex(seed_hex: &str) -> Result<SigningKey, KeyError> {
    let bytes = hex::decode(seed_hex.trim()).map_err(|e| KeyError::Invalid(e.to_string()))?;
    let seed: [u8; 32] = bytes
        .try_into()
        .map_err(|_| KeyError::Invalid("Ed25519 seed must be 32 bytes".into()))?;
    Ok(SigningKey::from_bytes(&seed))
}

pub fn verifying_key_from_hex(public_hex: &str) -> Result<VerifyingKey, KeyError> {
    let bytes = hex::decode(public_hex.trim()).map_err(|e| KeyError::Invalid(e.to_string()))?;
    let raw: [u8; 32] = bytes
        .try_into()
        .map_err(|_| KeyError::Invalid("Ed25519 public key must be 32 bytes".into()))?;
    VerifyingKey::from_bytes(&raw).map_err(|e| KeyError::Invalid(e.to_string()))
}

/// Reads a hex-encoded 32-byte seed from `path`.
pub fn read_signing_key(path: impl AsRef<Path>) -> Result<SigningKey, KeyError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| KeyError::Io {
        path: path.display().to_string(),
        source,
    })?;
    signing_key_from_hex(&text)
}

pub fn write_signing_key(path: impl AsRef<Path>, key: &SigningKey) -> Result<(), KeyError> {
    let path = path.as_ref();
    fs::write(path, format!("{}\n", hex::encode(key.to_bytes()))).map_err(|source| KeyError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn key_id(key: &VerifyingKey) -> String {
    b64(&Sha256::digest(key.as_bytes())[..12])
}

/// JWK (RFC 8037 OKP) for an Ed25519 verification key.
pub fn jwk(key: &VerifyingKey) -> Value {
    json!({
        "kty": "OKP",
        "crv": "Ed25519",
        "alg": "EdDSA",
        "use": "sig",
        "kid": key_id(key),
        "x": b64(key.as_bytes()),
    })
}

pub fn jwks(key: &VerifyingKey) -> Value {
    json!({ "keys": [jwk(key)] })
}

/// Extracts the first Ed25519 key from a JWK set.
pub fn key_from_jwks(set: &Value) -> Result<VerifyingKey, KeyError> {
    let keys = set
        .get("keys")
        .and_then(Value::as_array)
        .ok_or_else(|| KeyError::Invalid("JWK set has no keys array".into()))?;
    let jwk = keys
        .iter()
        .find(|k| k.get("kty").and_then(Value::as_str) == Some("OKP") && k.get("crv").and_then(Value::as_str) == Some("Ed25519"))
        .ok_or_else(|| KeyError::Invalid("JWK set has no Ed25519 key".into()))?;
    let x = jwk
        .get("x")
        .and_then(Value::as_str)
        .ok_or_else(|| KeyError::Invalid("JWK missing x".into()))?;
    let raw: [u8; 32] = URL_SAFE_NO_PAD
        .decode(x)
        .map_err(|e| KeyError::Invalid(e.to_string()))?
        .try_into()
        .map_err(|_| KeyError::Invalid("JWK x must be 32 bytes".into()))?;
    VerifyingKey::from_bytes(&raw).map_err(|e| KeyError::Invalid(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key() -> SigningKey {
        SigningKey::from_bytes(&[7u8; 32])
    }

    #[test]
    fn header_encoding_is_fixed() {
        let t = sign(&json!({"a": 1}), &key());
        assert!(t.starts_with("eyJhbGciOiJFZERTQSJ9."));
        assert!(!t.contains('='));
    }

    #[test]
    fn sign_verify_round_trip() {
        let payload = json!({"sub": "x", "n": 3});
        let t = sign(&payload, &key());
        assert_eq!(verify(&t, &key().verifying_key()).unwrap(), payload);
    }

    #[test]
    fn wrong_key_rejected() {
        let t = sign(&json!({"a": 1}), &key());
        let other = SigningKey::from_bytes(&[8u8; 32]).verifying_key();
        assert_eq!(verify(&t, &other), Err(TokenError::BadSignature));
    }

    #[test]
    fn malformed_shapes() {
        for bad in ["", "a.b", "a.b.c.d", "!!.e30.AA", "eyJhbGciOiJIUzI1NiJ9.e30.AA"] {
            assert!(matches!(decode(bad), Err(TokenError::Malformed(_))), "{bad}");
        }
    }

    #[test]
    fn jwks_round_trip() {
        let vk = key().verifying_key();
        assert_eq!(key_from_jwks(&jwks(&vk)).unwrap(), vk);
    }

    #[test]
    fn key_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.hex");
        write_signing_key(&path, &key()).unwrap();
        assert_eq!(read_signing_key(&path).unwrap().to_bytes(), key().to_bytes());
        std::fs::write(&path, "abcd").unwrap();
        assert!(matches!(read_signing_key(&path), Err(KeyError::Invalid(_))));
    }
}
