//! Privacy and compliance layer: field encryption, the access matrix,
//! patient consent and the audit chain.
//!
//! [`Compliance`] is the single entry point for access decisions. Every
//! decision it hands out (allow or deny) is appended to the audit log.

pub mod access;
pub mod audit;
pub mod consent;
pub mod crypto;

use std::sync::Arc;

use crate::clock::Clock;
use crate::domain::{ConsentGrant, ConsentScope, Role};
use crate::session::{Actor, SessionContext};

pub use access::{AccessMatrix, Action, Decision, DenyReason, ResourceClass};
pub use audit::{
    parse_log, verify_chain, verify_chain_against, verify_log_bytes, AuditEntry, AuditError,
    AuditEvent, AuditLog, ChainHash, ChainHead, Outcome, VerifyOutcome,
};
pub use consent::{ConsentError, ConsentRegistry, ConsentView};
pub use crypto::{
    decrypt_field, encrypt_field, encrypt_field_with_nonce, generate_key, CryptoError,
    EncryptedField, KeyId, KeyRing, SecretKey,
};

#[derive(Debug)]
pub struct Compliance {
    matrix: AccessMatrix,
    consents: Arc<ConsentRegistry>,
    audit: Arc<AuditLog>,
    clock: Arc<dyn Clock>,
}

impl Compliance {
    pub fn new(matrix: AccessMatrix, audit: Arc<AuditLog>, clock: Arc<dyn Clock>) -> Self {
        Compliance {
            matrix,
            consents: Arc::new(ConsentRegistry::new()),
            audit,
            clock,
        }
    }

    pub fn matrix(&self) -> &AccessMatrix {
        &self.matrix
    }

    pub fn audit_log(&self) -> &Arc<AuditLog> {
        &self.audit
    }

    pub fn consents(&self) -> &Arc<ConsentRegistry> {
        &self.consents
    }

    pub fn consent_view(&self) -> ConsentView {
        ConsentView::new(self.consents.clone())
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    /// Builds a session bound to this layer's consent registry.
    pub fn session(&self, actor: Actor, language: crate::domain::Language) -> SessionContext {
        SessionContext::new(actor, language, self.consent_view())
    }

    /// The access decision alone, without recording it. Callers that perform
    /// an operation after deciding must record exactly one entry through
    /// [`Compliance::record`].
    pub fn decide(
        &self,
        session: &SessionContext,
        action: Action,
        class: ResourceClass,
        owner_id: Option<&str>,
    ) -> Decision {
        let Actor::Authenticated { id, role } = &session.actor else {
            return Decision::Deny(DenyReason::Unauthenticated);
        };
        if !self.matrix.permits(*role, action, class) {
            return Decision::Deny(DenyReason::NotPermitted);
        }
        let owned = owner_id == Some(id.as_str());
        let consented =
            |scope| owner_id.is_some_and(|owner| self.consents.has_consent(owner, id, scope));
        let scope = match action {
            Action::Read => ConsentScope::ReadRecord,
            Action::Write => ConsentScope::WriteRecord,
        };
        let qualified = match (role, class) {
            (_, ResourceClass::AuditLog) => true,
            (Role::Patient, _) => owned,
            (Role::Doctor, ResourceClass::PatientRecord | ResourceClass::Appointment) => {
                consented(scope)
            }
            _ => false,
        };
        match (qualified, role) {
            (true, _) => Decision::Allow,
            (false, Role::Doctor) => Decision::Deny(DenyReason::NoConsent),
            (false, _) => Decision::Deny(DenyReason::NotOwner),
        }
    }

    /// Decides and records the decision. Fails closed if the audit log
    /// cannot be written.
    pub fn check_access(
        &self,
        session: &SessionContext,
        action: Action,
        class: ResourceClass,
        owner_id: Option<&str>,
    ) -> Decision {
        let decision = self.decide(session, action, class, owner_id);
        let outcome = if decision.is_allow() {
            Outcome::Allow
        } else {
            Outcome::Deny
        };
        match self.record(
            session,
            action.as_str(),
            class.as_str(),
            owner_id.unwrap_or("-"),
            outcome,
        ) {
            Ok(_) => decision,
            Err(_) => Decision::Deny(DenyReason::AuditUnavailable),
        }
    }

    /// Appends one entry attributed to the session's actor.
    pub fn record(
        &self,
        session: &SessionContext,
        action: &str,
        resource_class: &str,
        resource_id: &str,
        outcome: Outcome,
    ) -> Result<AuditEntry, AuditError> {
        let entry = self.audit.append(AuditEvent {
            actor_id: session.actor.audit_id().to_owned(),
            role: session.role(),
            action: action.to_owned(),
            resource_class: resource_class.to_owned(),
            resource_id: resource_id.to_owned(),
            outcome,
        });
        if let Err(e) = &entry {
            tracing::error!(error = %e, "audit append failed");
        }
        entry
    }

    /// Records a patient's grant to `grantee_id`. One audit entry either way.
    pub fn grant_consent(
        &self,
        session: &SessionContext,
        patient_id: &str,
        grantee_id: &str,
        scope: ConsentScope,
    ) -> Result<ConsentGrant, ConsentError> {
        let decision = self.decide(
            session,
            Action::Write,
            ResourceClass::Consent,
            Some(patient_id),
        );
        let result = if !decision.is_allow() {
            Err(ConsentError::NotOwner)
        } else if grantee_id.trim().is_empty() || grantee_id == patient_id {
            Err(ConsentError::InvalidGrantee)
        } else {
            Ok(())
        };
        let outcome = match &result {
            Ok(()) => Outcome::Allow,
            Err(ConsentError::NotOwner) => Outcome::Deny,
            Err(_) => Outcome::Error,
        };
        self.record(
            session,
            "consent.grant",
            ResourceClass::Consent.as_str(),
            patient_id,
            outcome,
        )
        .map_err(|_| ConsentError::AuditUnavailable)?;
        result?;
        Ok(self
            .consents
            .insert(patient_id, grantee_id, scope, self.clock.now()))
    }

    /// Revokes a grant. Only the granting patient may revoke it.
    pub fn revoke_consent(
        &self,
        session: &SessionContext,
        grant_id: &str,
    ) -> Result<ConsentGrant, ConsentError> {
        let result = match (session.role(), self.consents.get(grant_id)) {
            (Some(Role::Patient), Some(grant)) => {
                let decision = self.decide(
                    session,
                    Action::Write,
                    ResourceClass::Consent,
                    Some(&grant.patient_id),
                );
                if !decision.is_allow() {
                    Err(ConsentError::NotOwner)
                } else if !grant.is_active() {
                    Err(ConsentError::AlreadyRevoked)
                } else {
                    Ok(())
                }
            }
            (Some(Role::Patient), None) => Err(ConsentError::UnknownGrant),
            _ => Err(ConsentError::NotOwner),
        };
        let outcome = match &result {
            Ok(()) => Outcome::Allow,
            Err(ConsentError::NotOwner) => Outcome::Deny,
            Err(_) => Outcome::Error,
        };
        self.record(
            session,
            "consent.revoke",
            ResourceClass::Consent.as_str(),
            grant_id,
            outcome,
        )
        .map_err(|_| ConsentError::AuditUnavailable)?;
        result?;
        self.consents.revoke(grant_id, self.clock.now())
    }
}
