use std::sync::Arc;

use chrono::{DateTime, Utc};
use parking_lot::RwLock;

use crate::domain::{ConsentGrant, ConsentScope};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConsentError {
    #[error("only the patient may manage their consent")]
    NotOwner,
    #[error("grant already revoked")]
    AlreadyRevoked,
    #[error("unknown grant")]
    UnknownGrant,
    #[error("grantee id must be non-empty")]
    InvalidGrantee,
    #[error("audit log unavailable")]
    AuditUnavailable,
}

/// Patient-issued grants. Revocation is one-way; re-granting creates a new
/// record with a new id.
#[derive(Debug, Default)]
pub struct ConsentRegistry {
    grants: RwLock<Vec<ConsentGrant>>,
}

impl ConsentRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn insert(
        &self,
        patient_id: &str,
        grantee_id: &str,
        scope: ConsentScope,
        at: DateTime<Utc>,
    ) -> ConsentGrant {
        let mut grants = self.grants.write();
        let grant = ConsentGrant {
            grant_id: format!("grant-{}", grants.len() + 1),
            patient_id: patient_id.to_owned(),
            grantee_id: grantee_id.to_owned(),
            scope,
            granted_at: at,
            revoked_at: None,
        };
        grants.push(grant.clone());
        grant
    }

    pub(crate) fn revoke(
        &self,
        grant_id: &str,
        at: DateTime<Utc>,
    ) -> Result<ConsentGrant, ConsentError> {
        let mut grants = self.grants.write();
        let grant = grants
            .iter_mut()
            .find(|g| g.grant_id == grant_id)
            .ok_or(ConsentError::UnknownGrant)?;
        if grant.revoked_at.is_some() {
            return Err(ConsentError::AlreadyRevoked);
        }
        grant.revoked_at = Some(at);
        Ok(grant.clone())
    }

    pub fn get(&self, grant_id: &str) -> Option<ConsentGrant> {
        self.grants
            .read()
            .iter()
            .find(|g| g.grant_id == grant_id)
            .cloned()
    }

    /// True if an active grant from `patient_id` to `grantee_id` covers
    /// `scope`. A write grant also covers reading.
    pub fn has_consent(&self, patient_id: &str, grantee_id: &str, scope: ConsentScope) -> bool {
        self.grants.read().iter().any(|g| {
            g.is_active()
                && g.patient_id == patient_id
                && g.grantee_id == grantee_id
                && (g.scope == scope || g.scope == ConsentScope::WriteRecord)
        })
    }

    /// Patients with at least one active grant to `grantee_id`, sorted.
    pub fn patients_for(&self, grantee_id: &str) -> Vec<String> {
        let mut ids: Vec<String> = self
            .grants
            .read()
            .iter()
            .filter(|g| g.is_active() && g.grantee_id == grantee_id)
            .map(|g| g.patient_id.clone())
            .collect();
        ids.sort();
        ids.dedup();
        ids
    }

    pub fn grants_of(&self, patient_id: &str) -> Vec<ConsentGrant> {
        self.grants
            .read()
            .iter()
            .filter(|g| g.patient_id == patient_id)
            .cloned()
            .collect()
    }
}

/// Read-only handle carried in a session.
#[derive(Debug, Clone)]
pub struct ConsentView(Arc<ConsentRegistry>);

impl ConsentView {
    pub fn new(registry: Arc<ConsentRegistry>) -> Self {
        ConsentView(registry)
    }

    pub fn has_consent(&self, patient_id: &str, grantee_id: &str, scope: ConsentScope) -> bool {
        self.0.has_consent(patient_id, grantee_id, scope)
    }

    pub fn patients_for(&self, grantee_id: &str) -> Vec<String> {
        self.0.patients_for(grantee_id)
    }
}
