//! The credential store consulted by the login endpoint.
//!
//! File format: `{"accounts": [{"actor_id", "role", "credential_sha256"}]}`
//! where the hash is lowercase hex SHA-256 of the UTF-8 credential.

use std::collections::HashMap;

use carebridge_core::domain::Role;
use carebridge_core::fixtures::{FixtureError, FixtureSource};
use serde::Deserialize;
use sha2::{Digest, Sha256};
use subtle::ConstantTimeEq;

#[derive(Debug, thiserror::Error)]
pub enum AccountsError {
    #[error(transparent)]
    Fixture(#[from] FixtureError),
    #[error("malformed accounts file: {0}")]
    Malformed(String),
    #[error("duplicate account `{0}`")]
    Duplicate(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AccountsFile {
    accounts: Vec<AccountRecord>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AccountRecord {
    actor_id: String,
    role: Role,
    credential_sha256: String,
}

#[derive(Debug, Clone)]
struct Account {
    role: Role,
    hash: [u8; 32],
}

#[derive(Debug, Clone, Default)]
pub struct CredentialStore {
    accounts: HashMap<String, Account>,
}

impl CredentialStore {
    pub fn from_json(raw: &str) -> Result<Self, AccountsError> {
        let file: AccountsFile =
            serde_json::from_str(raw).map_err(|e| AccountsError::Malformed(e.to_string()))?;
        let mut accounts = HashMap::new();
        for record in file.accounts {
            let hash: [u8; 32] = hex::decode(&record.credential_sha256)
                .ok()
                .and_then(|b| b.try_into().ok())
                .ok_or_else(|| {
                    AccountsError::Malformed(format!("bad hash for `{}`", record.actor_id))
                })?;
            let account = Account {
                role: record.role,
                hash,
            };
            if accounts.insert(record.actor_id.clone(), account).is_some() {
                return Err(AccountsError::Duplicate(record.actor_id));
            }
        }
        Ok(CredentialStore { accounts })
    }

    /// Loads `demo/accounts.json` from the fixture source.
    pub fn load(source: &FixtureSource) -> Result<Self, AccountsError> {
        CredentialStore::from_json(&source.read("demo/accounts.json")?)
    }

    /// True iff the account exists with that role and credential.
    pub fn verify(&self, actor_id: &str, role: Role, credential: &str) -> bool {
        let digest: [u8; 32] = Sha256::digest(credential.as_bytes()).into();
        match self.accounts.get(actor_id) {
            Some(account) => bool::from(account.hash.ct_eq(&digest)) && account.role == role,
            None => false,
        }
    }

    pub fn len(&self) -> usize {
        self.accounts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accounts.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demo_accounts_verify() {
        let store = CredentialStore::load(&FixtureSource::Embedded).unwrap();
        assert_eq!(store.len(), 4);
        assert!(store.verify("p-1001", Role::Patient, "demo-patient-pass"));
        assert!(store.verify("d-2001", Role::Doctor, "demo-doctor-pass"));
        assert!(store.verify("a-3001", Role::Auditor, "demo-auditor-pass"));
        assert!(!store.verify("p-1001", Role::Patient, "wrong"));
        assert!(!store.verify("p-1001", Role::Doctor, "demo-patient-pass"));
        assert!(!store.verify("nobody", Role::Patient, "demo-patient-pass"));
    }

    #[test]
    fn malformed_files_are_rejected() {
        assert!(CredentialStore::from_json(
            r#"{"accounts": [{"actor_id": "x", "role": "patient", "credential_sha256": "zz"}]}"#
        )
        .is_err());
        let h = "0".repeat(64);
        let dup = format!(
            r#"{{"accounts": [{{"actor_id": "x", "role": "patient", "credential_sha256": "{h}"}},
                              {{"actor_id": "x", "role": "doctor", "credential_sha256": "{h}"}}]}}"#
        );
        assert!(matches!(
            CredentialStore::from_json(&dup),
            Err(AccountsError::Duplicate(_))
        ));
    }
}
