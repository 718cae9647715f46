//! Shared domain types and the three strict agent output schemas.
//!
//! Agent outputs are parsed with [`parse_symptom_assessment`],
//! [`parse_medication_advice`] and [`parse_appointment_intent`]. Every value
//! here serializes through [`crate::canonical::canonical_serialize`] for
//! hashing and storage.

mod parse;

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

pub use parse::{
    contains_dosage, parse_appointment_intent, parse_medication_advice, parse_symptom_assessment,
    SchemaError,
};

/// One of the three supported interaction languages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    En,
    Fr,
    Ar,
}

impl Language {
    pub const ALL: [Language; 3] = [Language::En, Language::Fr, Language::Ar];

    pub fn code(self) -> &'static str {
        match self {
            Language::En => "en",
            Language::Fr => "fr",
            Language::Ar => "ar",
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unsupported language code")]
pub struct UnknownLanguage;

impl FromStr for Language {
    type Err = UnknownLanguage;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "en" => Ok(Language::En),
            "fr" => Ok(Language::Fr),
            "ar" => Ok(Language::Ar),
            _ => Err(UnknownLanguage),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Patient,
    Doctor,
    Auditor,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Patient, Role::Doctor, Role::Auditor];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Patient => "patient",
            Role::Doctor => "doctor",
            Role::Auditor => "auditor",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = SchemaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "patient" => Ok(Role::Patient),
            "doctor" => Ok(Role::Doctor),
            "auditor" => Ok(Role::Auditor),
            _ => Err(SchemaError::new("unknown role")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Low,
    Medium,
    High,
    Unknown,
}

impl Severity {
    fn from_token(s: &str) -> Option<Self> {
        match s {
            "low" => Some(Severity::Low),
            "medium" => Some(Severity::Medium),
            "high" => Some(Severity::High),
            "unknown" => Some(Severity::Unknown),
            _ => None,
        }
    }
}

/// Output of the symptom checker agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymptomAssessment {
    pub condition: Option<String>,
    pub severity: Severity,
    pub follow_up: bool,
}

impl SymptomAssessment {
    /// Shape returned for off-topic, adversarial or unparseable input.
    pub fn unclear() -> Self {
        SymptomAssessment {
            condition: None,
            severity: Severity::Unknown,
            follow_up: true,
        }
    }

    /// Shape returned when the input references an emergency.
    pub fn emergency() -> Self {
        SymptomAssessment {
            condition: None,
            severity: Severity::High,
            follow_up: true,
        }
    }
}

/// Output of the medication guidance agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MedicationAdvice {
    pub advice: Vec<String>,
    pub reasoning: String,
    pub escalation: bool,
}

impl MedicationAdvice {
    pub const FALLBACK_REASONING: &'static str = "unclear symptoms";

    /// The single fallback shape: no advice, escalate to a clinician.
    pub fn fallback() -> Self {
        MedicationAdvice {
            advice: Vec::new(),
            reasoning: Self::FALLBACK_REASONING.to_owned(),
            escalation: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AppointmentAction {
    Create,
    Update,
    Cancel,
    Lookup,
}

impl AppointmentAction {
    pub fn as_str(self) -> &'static str {
        match self {
            AppointmentAction::Create => "create",
            AppointmentAction::Update => "update",
            AppointmentAction::Cancel => "cancel",
            AppointmentAction::Lookup => "lookup",
        }
    }

    fn from_token(s: &str) -> Option<Self> {
        match s {
            "create" => Some(AppointmentAction::Create),
            "update" => Some(AppointmentAction::Update),
            "cancel" => Some(AppointmentAction::Cancel),
            "lookup" => Some(AppointmentAction::Lookup),
            _ => None,
        }
    }
}

/// Output of the appointment agent: structured scheduling intent, never an
/// executed operation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppointmentIntent {
    pub action: AppointmentAction,
    pub date: Option<NaiveDate>,
    pub reason: String,
    pub authorized: bool,
}

impl AppointmentIntent {
    pub const INVALID_REASON: &'static str = "invalid";

    pub fn invalid() -> Self {
        AppointmentIntent {
            action: AppointmentAction::Lookup,
            date: None,
            reason: Self::INVALID_REASON.to_owned(),
            authorized: false,
        }
    }

    /// True for the designated "could not interpret" shape, whatever the
    /// `authorized` flag says.
    pub fn is_invalid_shape(&self) -> bool {
        self.action == AppointmentAction::Lookup
            && self.date.is_none()
            && self.reason == Self::INVALID_REASON
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub timestamp: DateTime<Utc>,
    pub author_id: String,
    pub note: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AppointmentStatus {
    Scheduled,
    Cancelled,
    Completed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Appointment {
    pub appointment_id: String,
    pub date: NaiveDate,
    pub reason: String,
    pub status: AppointmentStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient_id: String,
    pub full_name: String,
    pub date_of_birth: NaiveDate,
    pub language_pref: Language,
    #[serde(default)]
    pub history: Vec<HistoryEntry>,
    #[serde(default)]
    pub appointments: Vec<Appointment>,
}

impl PatientRecord {
    /// Checks the at-most-one-scheduled-appointment-per-date rule.
    pub fn has_unique_scheduled_dates(&self) -> bool {
        let mut seen = std::collections::HashSet::new();
        self.appointments
            .iter()
            .filter(|a| a.status == AppointmentStatus::Scheduled)
            .all(|a| seen.insert(a.date))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsentScope {
    ReadRecord,
    WriteRecord,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsentGrant {
    pub grant_id: String,
    pub patient_id: String,
    pub grantee_id: String,
    pub scope: ConsentScope,
    pub granted_at: DateTime<Utc>,
    pub revoked_at: Option<DateTime<Utc>>,
}

impl ConsentGrant {
    pub fn is_active(&self) -> bool {
        self.revoked_at.is_none()
    }
}
