//! Field-level AES-256-GCM envelopes.
//!
//! Every PHI field is sealed under the ring's active key with a fresh random
//! 96-bit nonce. The AAD is the `record_id/field_path` string, so a
//! ciphertext moved to another record or field fails authentication.

use std::collections::HashMap;
use std::fmt;

use aes_gcm::aead::AeadInPlace;
use aes_gcm::{Aes256Gcm, Key, KeyInit, Nonce, Tag};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use rand::rngs::OsRng;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use zeroize::Zeroizing;

pub const KEY_LEN: usize = 32;
pub const NONCE_LEN: usize = 12;
pub const TAG_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CryptoError {
    #[error("authentication failed")]
    AuthFailure,
    #[error("unknown key id `{0}`")]
    UnknownKey(String),
    #[error("system randomness unavailable")]
    Entropy,
    #[error("malformed key material")]
    BadKey,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KeyId(String);

impl KeyId {
    /// Key ids are a fingerprint of the key, so an externally supplied
    /// master key maps to the same id across restarts.
    pub fn for_key(key: &SecretKey) -> Self {
        let mut h = Sha256::new();
        h.update(b"carebridge/key-id/v1\0");
        h.update(key.0.as_slice());
        KeyId(format!("k-{}", hex::encode(&h.finalize()[..8])))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for KeyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// 256-bit key. Never printed, logged or serialized.
#[derive(Clone)]
pub struct SecretKey(Zeroizing<[u8; KEY_LEN]>);

impl SecretKey {
    pub fn from_bytes(bytes: [u8; KEY_LEN]) -> Self {
        SecretKey(Zeroizing::new(bytes))
    }

    pub fn from_hex(s: &str) -> Result<Self, CryptoError> {
        let mut bytes = [0u8; KEY_LEN];
        hex::decode_to_slice(s.trim(), &mut bytes).map_err(|_| CryptoError::BadKey)?;
        Ok(SecretKey::from_bytes(bytes))
    }

    pub fn random() -> Result<Self, CryptoError> {
        let mut bytes = [0u8; KEY_LEN];
        OsRng
            .try_fill_bytes(&mut bytes)
            .map_err(|_| CryptoError::Entropy)?;
        Ok(SecretKey::from_bytes(bytes))
    }

    /// Raw bytes, for handing to the cipher or printing once from `gen-key`.
    pub fn expose(&self) -> &[u8; KEY_LEN] {
        &self.0
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretKey(..)")
    }
}

/// A fresh random key and its id.
pub fn generate_key() -> Result<(KeyId, SecretKey), CryptoError> {
    let key = SecretKey::random()?;
    Ok((KeyId::for_key(&key), key))
}

/// Key id → key, plus the id used for new encryptions.
#[derive(Clone)]
pub struct KeyRing {
    keys: HashMap<KeyId, SecretKey>,
    active: KeyId,
}

impl KeyRing {
    pub fn new(key: SecretKey) -> Self {
        let id = KeyId::for_key(&key);
        let mut keys = HashMap::new();
        keys.insert(id.clone(), key);
        KeyRing { keys, active: id }
    }

    pub fn from_master_key_hex(hex: &str) -> Result<Self, CryptoError> {
        Ok(KeyRing::new(SecretKey::from_hex(hex)?))
    }

    pub fn generate() -> Result<Self, CryptoError> {
        Ok(KeyRing::new(SecretKey::random()?))
    }

    /// Adds a fresh key and makes it the active one.
    pub fn generate_key(&mut self) -> Result<KeyId, CryptoError> {
        let (id, key) = generate_key()?;
        self.keys.insert(id.clone(), key);
        self.active = id.clone();
        Ok(id)
    }

    /// Registers an existing key (for example a previous master key) without
    /// changing the active key. Existing ids are never overwritten.
    pub fn insert(&mut self, key: SecretKey) -> KeyId {
        let id = KeyId::for_key(&key);
        self.keys.entry(id.clone()).or_insert(key);
        id
    }

    pub fn active_key_id(&self) -> &KeyId {
        &self.active
    }

    pub fn contains(&self, id: &KeyId) -> bool {
        self.keys.contains_key(id)
    }

    fn cipher(&self, id: &KeyId) -> Result<Aes256Gcm, CryptoError> {
        let key = self
            .keys
            .get(id)
            .ok_or_else(|| CryptoError::UnknownKey(id.to_string()))?;
        Ok(Aes256Gcm::new(Key::<Aes256Gcm>::from_slice(key.expose())))
    }

    #[cfg(test)]
    pub(crate) fn raw_keys(&self) -> Vec<[u8; KEY_LEN]> {
        self.keys.values().map(|k| *k.expose()).collect()
    }
}

impl fmt::Debug for KeyRing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyRing")
            .field("key_ids", &self.keys.keys().collect::<Vec<_>>())
            .field("active", &self.active)
            .finish()
    }
}

/// One sealed field. Binary parts are base64 in serialized form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncryptedField {
    pub key_id: KeyId,
    #[serde(with = "b64_array")]
    pub nonce: [u8; NONCE_LEN],
    #[serde(with = "b64_vec")]
    pub ciphertext: Vec<u8>,
    #[serde(with = "b64_array")]
    pub tag: [u8; TAG_LEN],
    pub aad: String,
}

pub fn encrypt_field(
    plaintext: &[u8],
    keyring: &KeyRing,
    aad: &str,
) -> Result<EncryptedField, CryptoError> {
    let mut nonce = [0u8; NONCE_LEN];
    OsRng
        .try_fill_bytes(&mut nonce)
        .map_err(|_| CryptoError::Entropy)?;
    encrypt_field_with_nonce(plaintext, keyring, aad, nonce)
}

/// Deterministic variant for known-answer testing. A nonce must never be
/// reused under the same key; production paths use [`encrypt_field`].
pub fn encrypt_field_with_nonce(
    plaintext: &[u8],
    keyring: &KeyRing,
    aad: &str,
    nonce: [u8; NONCE_LEN],
) -> Result<EncryptedField, CryptoError> {
    let key_id = keyring.active_key_id().clone();
    let cipher = keyring.cipher(&key_id)?;
    let mut buf = plaintext.to_vec();
    let tag = cipher
        .encrypt_in_place_detached(Nonce::from_slice(&nonce), aad.as_bytes(), &mut buf)
        .map_err(|_| CryptoError::AuthFailure)?;
    Ok(EncryptedField {
        key_id,
        nonce,
        ciphertext: buf,
        tag: tag.into(),
        aad: aad.to_owned(),
    })
}

/// Opens `field` under the caller's expected `aad`. The stored `aad` string
/// is informational; the tag check is what binds it.
pub fn decrypt_field(
    field: &EncryptedField,
    keyring: &KeyRing,
    aad: &str,
) -> Result<Vec<u8>, CryptoError> {
    let cipher = keyring.cipher(&field.key_id)?;
    let mut buf = field.ciphertext.clone();
    cipher
        .decrypt_in_place_detached(
            Nonce::from_slice(&field.nonce),
            aad.as_bytes(),
            &mut buf,
            Tag::from_slice(&field.tag),
        )
        .map_err(|_| CryptoError::AuthFailure)?;
    Ok(buf)
}

mod b64_vec {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&B64.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        B64.decode(s).map_err(serde::de::Error::custom)
    }
}

mod b64_array {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer, const N: usize>(
        bytes: &[u8; N],
        s: S,
    ) -> Result<S::Ok, S::Error> {
        s.serialize_str(&B64.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>, const N: usize>(
        d: D,
    ) -> Result<[u8; N], D::Error> {
        let bytes = b64_vec::deserialize(d)?;
        bytes
            .try_into()
            .map_err(|_| serde::de::Error::custom("wrong length"))
    }
}
