use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use chrono::{Duration, NaiveDate};
use serde::Serialize;

use super::adapter::{AdapterError, CompletionAdapter};
use super::safety::{EmergencyLexicon, PrescriptionDenyList};
use super::templates::TemplateSet;
use super::AgentId;
use crate::clock::Clock;
use crate::domain::{
    parse_appointment_intent, parse_medication_advice, parse_symptom_assessment, AppointmentIntent,
    Language, MedicationAdvice, Role, Severity, SymptomAssessment,
};
use crate::session::SessionContext;

/// Appointment dates must fall within this many days from today.
pub const DATE_WINDOW_DAYS: i64 = 365;

/// How an agent arrived at its returned value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Disposition {
    /// The adapter output parsed and passed every filter.
    Parsed,
    /// The input matched the emergency lexicon.
    Emergency,
    /// The adapter output failed schema validation.
    SchemaFallback,
    /// The adapter errored, timed out or panicked.
    AdapterFallback,
    /// Parsed advice was rejected by the prescription filter.
    PostFilter,
}

impl Disposition {
    pub fn is_fallback(self) -> bool {
        !matches!(self, Disposition::Parsed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentRun<T> {
    pub value: T,
    pub disposition: Disposition,
}

impl<T> AgentRun<T> {
    fn new(value: T, disposition: Disposition) -> Self {
        AgentRun { value, disposition }
    }
}

/// Whether adapter failures collapse to the fallback or surface as errors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum FallbackPolicy {
    #[default]
    Fallback,
    /// Adapter failures are returned as errors. Schema failures and safety
    /// filters still produce the fallback value.
    Strict,
}

/// The authorization policy for appointment intents.
pub fn authorized_for(role: Option<Role>) -> bool {
    matches!(role, Some(Role::Patient | Role::Doctor))
}

/// Calls the adapter, turning panics into errors.
fn call_adapter(
    adapter: &dyn CompletionAdapter,
    templates: &TemplateSet,
    agent: AgentId,
    language: Language,
    input: &str,
) -> Result<String, AdapterError> {
    let template = templates.render_prompt(agent, language);
    catch_unwind(AssertUnwindSafe(|| adapter.complete(template, input)))
        .unwrap_or(Err(AdapterError::Panicked))
}

fn symptom_checker(
    input: &str,
    language: Language,
    templates: &TemplateSet,
    adapter: &dyn CompletionAdapter,
    lexicon: &EmergencyLexicon,
    policy: FallbackPolicy,
) -> Result<AgentRun<SymptomAssessment>, AdapterError> {
    if lexicon.matches(input) {
        return Ok(AgentRun::new(
            SymptomAssessment::emergency(),
            Disposition::Emergency,
        ));
    }
    let raw = match call_adapter(adapter, templates, AgentId::SymptomChecker, language, input) {
        Ok(raw) => raw,
        Err(e) if policy == FallbackPolicy::Strict => return Err(e),
        Err(e) => {
            tracing::warn!(agent = "symptom_checker", error = %e, "adapter failed");
            return Ok(AgentRun::new(
                SymptomAssessment::unclear(),
                Disposition::AdapterFallback,
            ));
        }
    };
    Ok(match parse_symptom_assessment(&raw) {
        Ok(mut value) => {
            // Unreachable after the early return; kept as a last guard.
            if lexicon.matches(input) {
                value.severity = Severity::High;
                value.follow_up = true;
            }
            AgentRun::new(value, Disposition::Parsed)
        }
        Err(_) => AgentRun::new(SymptomAssessment::unclear(), Disposition::SchemaFallback),
    })
}

fn medication(
    input: &str,
    language: Language,
    templates: &TemplateSet,
    adapter: &dyn CompletionAdapter,
    lexicon: &EmergencyLexicon,
    denylist: &PrescriptionDenyList,
    policy: FallbackPolicy,
) -> Result<AgentRun<MedicationAdvice>, AdapterError> {
    if lexicon.matches(input) {
        return Ok(AgentRun::new(
            MedicationAdvice::fallback(),
            Disposition::Emergency,
        ));
    }
    let raw = match call_adapter(adapter, templates, AgentId::Medication, language, input) {
        Ok(raw) => raw,
        Err(e) if policy == FallbackPolicy::Strict => return Err(e),
        Err(e) => {
            tracing::warn!(agent = "medication", error = %e, "adapter failed");
            return Ok(AgentRun::new(
                MedicationAdvice::fallback(),
                Disposition::AdapterFallback,
            ));
        }
    };
    Ok(match parse_medication_advice(&raw) {
        Ok(value) if value.advice.iter().any(|a| denylist.matches(a)) => {
            AgentRun::new(MedicationAdvice::fallback(), Disposition::PostFilter)
        }
        Ok(value) => AgentRun::new(value, Disposition::Parsed),
        Err(_) => AgentRun::new(MedicationAdvice::fallback(), Disposition::SchemaFallback),
    })
}

fn within_window(date: NaiveDate, today: NaiveDate) -> bool {
    date >= today && date <= today + Duration::days(DATE_WINDOW_DAYS)
}

fn appointment(
    input: &str,
    language: Language,
    session: &SessionContext,
    templates: &TemplateSet,
    adapter: &dyn CompletionAdapter,
    clock: &dyn Clock,
    policy: FallbackPolicy,
) -> Result<AgentRun<AppointmentIntent>, AdapterError> {
    let raw = match call_adapter(adapter, templates, AgentId::Appointment, language, input) {
        Ok(raw) => raw,
        Err(e) if policy == FallbackPolicy::Strict => return Err(e),
        Err(e) => {
            tracing::warn!(agent = "appointment", error = %e, "adapter failed");
            return Ok(AgentRun::new(
                AppointmentIntent::invalid(),
                Disposition::AdapterFallback,
            ));
        }
    };
    Ok(match parse_appointment_intent(&raw) {
        Ok(mut value) => {
            value.authorized = authorized_for(session.role());
            if value.date.is_some_and(|d| !within_window(d, clock.today())) {
                value.date = None;
            }
            AgentRun::new(value, Disposition::Parsed)
        }
        Err(_) => AgentRun::new(AppointmentIntent::invalid(), Disposition::SchemaFallback),
    })
}

/// Runs the symptom checker. Never fails; every failure yields the
/// "unclear" fallback and lexicon hits yield the emergency value.
pub fn run_symptom_checker(
    input: &str,
    language: Language,
    templates: &TemplateSet,
    adapter: &dyn CompletionAdapter,
    lexicon: &EmergencyLexicon,
) -> AgentRun<SymptomAssessment> {
    symptom_checker(
        input,
        language,
        templates,
        adapter,
        lexicon,
        FallbackPolicy::Fallback,
    )
    .expect("fallback policy never errors")
}

/// Runs the medication agent. Never fails.
pub fn run_medication_agent(
    input: &str,
    language: Language,
    templates: &TemplateSet,
    adapter: &dyn CompletionAdapter,
    lexicon: &EmergencyLexicon,
    denylist: &PrescriptionDenyList,
) -> AgentRun<MedicationAdvice> {
    medication(
        input,
        language,
        templates,
        adapter,
        lexicon,
        denylist,
        FallbackPolicy::Fallback,
    )
    .expect("fallback policy never errors")
}

/// Runs the appointment agent. Never fails. `authorized` always reflects
/// the session role, whatever the adapter claimed.
pub fn run_appointment_agent(
    input: &str,
    language: Language,
    session: &SessionContext,
    templates: &TemplateSet,
    adapter: &dyn CompletionAdapter,
    clock: &dyn Clock,
) -> AgentRun<AppointmentIntent> {
    appointment(
        input,
        language,
        session,
        templates,
        adapter,
        clock,
        FallbackPolicy::Fallback,
    )
    .expect("fallback policy never errors")
}

/// Bundles everything the agents need. Shared across request handlers.
#[derive(Clone)]
pub struct AgentRuntime {
    pub templates: Arc<TemplateSet>,
    pub adapter: Arc<dyn CompletionAdapter>,
    pub lexicon: Arc<EmergencyLexicon>,
    pub denylist: Arc<PrescriptionDenyList>,
    pub clock: Arc<dyn Clock>,
    pub policy: FallbackPolicy,
}

impl std::fmt::Debug for AgentRuntime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AgentRuntime")
            .field("policy", &self.policy)
            .finish_non_exhaustive()
    }
}

impl AgentRuntime {
    /// Runtime over the embedded fixtures.
    pub fn new(adapter: Arc<dyn CompletionAdapter>, clock: Arc<dyn Clock>) -> Self {
        AgentRuntime {
            templates: Arc::new(TemplateSet::embedded()),
            adapter,
            lexicon: Arc::new(EmergencyLexicon::embedded()),
            denylist: Arc::new(PrescriptionDenyList::embedded()),
            clock,
            policy: FallbackPolicy::Fallback,
        }
    }

    pub fn with_policy(mut self, policy: FallbackPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn symptom_checker(
        &self,
        input: &str,
        language: Language,
    ) -> Result<AgentRun<SymptomAssessment>, AdapterError> {
        symptom_checker(
            input,
            language,
            &self.templates,
            self.adapter.as_ref(),
            &self.lexicon,
            self.policy,
        )
    }

    pub fn medication(
        &self,
        input: &str,
        language: Language,
    ) -> Result<AgentRun<MedicationAdvice>, AdapterError> {
        medication(
            input,
            language,
            &self.templates,
            self.adapter.as_ref(),
            &self.lexicon,
            &self.denylist,
            self.policy,
        )
    }

    pub fn appointment(
        &self,
        input: &str,
        language: Language,
        session: &SessionContext,
    ) -> Result<AgentRun<AppointmentIntent>, AdapterError> {
        appointment(
            input,
            language,
            session,
            &self.templates,
            self.adapter.as_ref(),
            self.clock.as_ref(),
            self.policy,
        )
    }
}
