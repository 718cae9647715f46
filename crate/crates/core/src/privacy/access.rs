//! Deny-by-default role matrix.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::domain::Role;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Read,
    Write,
}

impl Action {
    pub const ALL: [Action; 2] = [Action::Read, Action::Write];

    pub fn as_str(self) -> &'static str {
        match self {
            Action::Read => "read",
            Action::Write => "write",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResourceClass {
    OwnRecord,
    PatientRecord,
    Appointment,
    AuditLog,
    Consent,
}

impl ResourceClass {
    pub const ALL: [ResourceClass; 5] = [
        ResourceClass::OwnRecord,
        ResourceClass::PatientRecord,
        ResourceClass::Appointment,
        ResourceClass::AuditLog,
        ResourceClass::Consent,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ResourceClass::OwnRecord => "own_record",
            ResourceClass::PatientRecord => "patient_record",
            ResourceClass::Appointment => "appointment",
            ResourceClass::AuditLog => "audit_log",
            ResourceClass::Consent => "consent",
        }
    }
}

/// The closed set of permitted (role, action, class) triples. Anything not
/// listed is denied.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessMatrix {
    allowed: BTreeSet<(Role, Action, ResourceClass)>,
}

impl AccessMatrix {
    pub fn new(triples: impl IntoIterator<Item = (Role, Action, ResourceClass)>) -> Self {
        AccessMatrix {
            allowed: triples.into_iter().collect(),
        }
    }

    /// Least-privilege matrix: patients manage their own record, appointments
    /// and consent; doctors work on patient records and appointments (consent
    /// qualifiers apply); auditors only read the audit log.
    pub fn standard() -> Self {
        use Action::*;
        use ResourceClass::*;
        use Role::*;
        AccessMatrix::new([
            (Patient, Read, OwnRecord),
            (Patient, Write, OwnRecord),
            (Patient, Read, Appointment),
            (Patient, Write, Appointment),
            (Patient, Read, Consent),
            (Patient, Write, Consent),
            (Doctor, Read, PatientRecord),
            (Doctor, Write, PatientRecord),
            (Doctor, Read, Appointment),
            (Doctor, Write, Appointment),
            (Auditor, Read, AuditLog),
        ])
    }

    pub fn permits(&self, role: Role, action: Action, class: ResourceClass) -> bool {
        self.allowed.contains(&(role, action, class))
    }

    pub fn triples(&self) -> impl Iterator<Item = &(Role, Action, ResourceClass)> {
        self.allowed.iter()
    }
}

impl Default for AccessMatrix {
    fn default() -> Self {
        AccessMatrix::standard()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DenyReason {
    Unauthenticated,
    NotPermitted,
    NotOwner,
    NoConsent,
    /// The decision could not be recorded, so it is not granted.
    AuditUnavailable,
}

impl fmt::Display for DenyReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DenyReason::Unauthenticated => "not authenticated",
            DenyReason::NotPermitted => "role not permitted",
            DenyReason::NotOwner => "not the owner",
            DenyReason::NoConsent => "no consent",
            DenyReason::AuditUnavailable => "audit log unavailable",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Allow,
    Deny(DenyReason),
}

impl Decision {
    pub fn is_allow(self) -> bool {
        matches!(self, Decision::Allow)
    }
}
