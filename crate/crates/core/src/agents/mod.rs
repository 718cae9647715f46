//! The three agents: symptom checker, medication guidance and appointment
//! intent.
//!
//! Each agent renders a language-specific template, asks a
//! [`CompletionAdapter`] for raw text, and turns that text into a typed value
//! through the strict domain parsers. Host-side safety filters run on both
//! sides of the adapter, and every failure collapses to the agent's fixed
//! fallback value.

mod adapter;
mod runtime;
mod safety;
mod templates;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use adapter::{
    AdapterError, CompletionAdapter, StubAdapter, StubRule, StubRules, StubRulesError,
    TimeoutAdapter, DEFAULT_ADAPTER_TIMEOUT,
};
pub use runtime::{
    authorized_for, run_appointment_agent, run_medication_agent, run_symptom_checker, AgentRun,
    AgentRuntime, Disposition, FallbackPolicy, DATE_WINDOW_DAYS,
};
pub use safety::{normalize_text, EmergencyLexicon, PrescriptionDenyList, SafetyError};
pub use templates::{PromptTemplate, TemplateError, TemplateSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentId {
    SymptomChecker,
    Medication,
    Appointment,
}

impl AgentId {
    pub const ALL: [AgentId; 3] = [
        AgentId::SymptomChecker,
        AgentId::Medication,
        AgentId::Appointment,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentId::SymptomChecker => "symptom_checker",
            AgentId::Medication => "medication",
            AgentId::Appointment => "appointment",
        }
    }

    pub fn output_schema(self) -> SchemaId {
        match self {
            AgentId::SymptomChecker => SchemaId::SymptomAssessment,
            AgentId::Medication => SchemaId::MedicationAdvice,
            AgentId::Appointment => SchemaId::AppointmentIntent,
        }
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown agent")]
pub struct UnknownAgent;

impl FromStr for AgentId {
    type Err = UnknownAgent;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AgentId::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or(UnknownAgent)
    }
}

/// Identifiers of the wire schemas a tool consumes or produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemaId {
    AgentInput,
    SymptomAssessment,
    MedicationAdvice,
    AppointmentIntent,
}

impl SchemaId {
    pub fn as_str(self) -> &'static str {
        match self {
            SchemaId::AgentInput => "agent_input",
            SchemaId::SymptomAssessment => "symptom_assessment",
            SchemaId::MedicationAdvice => "medication_advice",
            SchemaId::AppointmentIntent => "appointment_intent",
        }
    }

    /// Output keys in declaration order. Empty for the input schema.
    pub fn output_keys(self) -> &'static [&'static str] {
        match self {
            SchemaId::AgentInput => &[],
            SchemaId::SymptomAssessment => &["condition", "severity", "follow_up"],
            SchemaId::MedicationAdvice => &["advice", "reasoning", "escalation"],
            SchemaId::AppointmentIntent => &["action", "date", "reason", "authorized"],
        }
    }
}
