//! Bearer tokens: canonical JSON claims signed with HMAC-SHA256.
//!
//! Wire format is `base64url(claims) "." base64url(mac)`, both unpadded.
//! Claims carry identifiers and a role only.

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use carebridge_core::canonical::canonical_serialize;
use carebridge_core::domain::Role;
use chrono::{DateTime, Duration, Utc};
use hmac::{Hmac, Mac};
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use zeroize::Zeroizing;

type HmacSha256 = Hmac<Sha256>;

pub const DEFAULT_TOKEN_TTL: Duration = Duration::hours(1);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Claims {
    pub actor_id: String,
    pub role: Role,
    /// Expiry as Unix seconds.
    pub exp: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum TokenError {
    #[error("malformed token")]
    Malformed,
    #[error("bad token signature")]
    BadSignature,
    #[error("token expired")]
    Expired,
}

pub struct TokenSigner {
    secret: Zeroizing<Vec<u8>>,
    ttl: Duration,
}

impl std::fmt::Debug for TokenSigner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TokenSigner")
            .field("ttl", &self.ttl)
            .finish_non_exhaustive()
    }
}

impl TokenSigner {
    pub fn new(secret: &[u8], ttl: Duration) -> Self {
        TokenSigner {
            secret: Zeroizing::new(secret.to_vec()),
            ttl,
        }
    }

    /// Derives the signing secret from the storage master key so operators
    /// manage a single secret.
    pub fn from_master_key(master: &[u8], ttl: Duration) -> Self {
        let mut mac = HmacSha256::new_from_slice(master).expect("hmac accepts any key length");
        mac.update(b"carebridge token signing v1");
        TokenSigner::new(&mac.finalize().into_bytes(), ttl)
    }

    pub fn ttl(&self) -> Duration {
        self.ttl
    }

    fn mac(&self, payload: &[u8]) -> HmacSha256 {
        let mut mac =
            HmacSha256::new_from_slice(&self.secret).expect("hmac accepts any key length");
        mac.update(payload);
        mac
    }

    pub fn issue(&self, actor_id: &str, role: Role, now: DateTime<Utc>) -> (String, Claims) {
        let claims = Claims {
            actor_id: actor_id.to_owned(),
            role,
            exp: (now + self.ttl).timestamp(),
        };
        (self.sign(&claims), claims)
    }

    pub fn sign(&self, claims: &Claims) -> String {
        let payload = canonical_serialize(claims);
        let tag = self.mac(&payload).finalize().into_bytes();
        format!(
            "{}.{}",
            URL_SAFE_NO_PAD.encode(&payload),
            URL_SAFE_NO_PAD.encode(tag)
        )
    }

    /// Accepts a token iff its signature is valid and it has not expired.
    pub fn verify(&self, token: &str, now: DateTime<Utc>) -> Result<Claims, TokenError> {
        let (payload, tag) = token.split_once('.').ok_or(TokenError::Malformed)?;
        let payload = URL_SAFE_NO_PAD
            .decode(payload)
            .map_err(|_| TokenError::Malformed)?;
        let tag = URL_SAFE_NO_PAD
            .decode(tag)
            .map_err(|_| TokenError::Malformed)?;
        self.mac(&payload)
            .verify_slice(&tag)
            .map_err(|_| TokenError::BadSignature)?;
        let claims: Claims = serde_json::from_slice(&payload).map_err(|_| TokenError::Malformed)?;
        if now.timestamp() >= claims.exp {
            return Err(TokenError::Expired);
        }
        Ok(claims)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t0() -> DateTime<Utc> {
        "2025-04-01T00:00:00Z".parse().unwrap()
    }

    #[test]
    fn issued_tokens_verify_until_expiry() {
        let signer = TokenSigner::new(b"secret", DEFAULT_TOKEN_TTL);
        let (token, claims) = signer.issue("p-1001", Role::Patient, t0());
        assert_eq!(signer.verify(&token, t0()).unwrap(), claims);
        assert_eq!(
            signer
                .verify(&token, t0() + Duration::minutes(59))
                .unwrap()
                .role,
            Role::Patient
        );
        assert_eq!(
            signer.verify(&token, t0() + Duration::hours(1)),
            Err(TokenError::Expired)
        );
    }

    #[test]
    fn forged_and_garbled_tokens_fail() {
        let signer = TokenSigner::new(b"secret", DEFAULT_TOKEN_TTL);
        let other = TokenSigner::new(b"other", DEFAULT_TOKEN_TTL);
        let (token, mut claims) = signer.issue("p-1001", Role::Patient, t0());
        assert_eq!(other.verify(&token, t0()), Err(TokenError::BadSignature));

        claims.role = Role::Doctor;
        let payload = URL_SAFE_NO_PAD.encode(canonical_serialize(&claims));
        let tag = token.split_once('.').unwrap().1;
        assert_eq!(
            signer.verify(&format!("{payload}.{tag}"), t0()),
            Err(TokenError::BadSignature)
        );
        assert_eq!(signer.verify("nodot", t0()), Err(TokenError::Malformed));
        assert_eq!(signer.verify("a.b", t0()), Err(TokenError::Malformed));
    }

    #[test]
    fn derived_secrets_differ_per_master_key() {
        let a = TokenSigner::from_master_key(&[1u8; 32], DEFAULT_TOKEN_TTL);
        let b = TokenSigner::from_master_key(&[2u8; 32], DEFAULT_TOKEN_TTL);
        let (token, _) = a.issue("d-2001", Role::Doctor, t0());
        assert!(a.verify(&token, t0()).is_ok());
        assert_eq!(b.verify(&token, t0()), Err(TokenError::BadSignature));
    }
}
