//! Keyword routing from free text to an agent.

use std::sync::LazyLock;

use regex::Regex;

use crate::agents::{normalize_text, AgentId};
use crate::domain::Language;

struct Keywords {
    latin: Regex,
    arabic: Vec<String>,
}

impl Keywords {
    fn new(latin: &[&str], arabic: &[&str]) -> Self {
        let alternation = latin
            .iter()
            .map(|k| regex::escape(&normalize_text(k)))
            .collect::<Vec<_>>()
            .join("|");
        Keywords {
            latin: Regex::new(&format!(r"\b(?:{alternation})\b")).expect("keyword regex"),
            arabic: arabic.iter().map(|k| normalize_text(k)).collect(),
        }
    }

    fn matches(&self, folded: &str) -> bool {
        self.latin.is_match(folded) || self.arabic.iter().any(|k| folded.contains(k.as_str()))
    }
}

static APPOINTMENT: LazyLock<Keywords> = LazyLock::new(|| {
    Keywords::new(
        &[
            "appointment",
            "appointments",
            "book",
            "booking",
            "reschedule",
            "cancel",
            "schedule a visit",
            "rendez-vous",
            "rdv",
            "réserver",
            "reserver",
            "annuler",
            "reporter",
            "prendre rendez-vous",
        ],
        &["موعد", "مواعيد", "حجز", "احجز", "إلغاء", "الغاء", "أحجز"],
    )
});

static MEDICATION: LazyLock<Keywords> = LazyLock::new(|| {
    Keywords::new(
        &[
            "medication",
            "medications",
            "medicine",
            "medicines",
            "what should i take",
            "what can i take",
            "remedy",
            "médicament",
            "médicaments",
            "medicament",
            "que dois-je prendre",
            "que puis-je prendre",
            "remède",
        ],
        &[
            "دواء",
            "أدوية",
            "ادوية",
            "ماذا آخذ",
            "ماذا اخذ",
            "ماذا يجب أن آخذ",
        ],
    )
});

/// Appointment keywords win over medication keywords; anything else goes to
/// the symptom checker. Keywords of every language are checked.
pub fn classify_intent(text: &str, _language: Language) -> AgentId {
    let folded = normalize_text(text);
    if APPOINTMENT.matches(&folded) {
        AgentId::Appointment
    } else if MEDICATION.matches(&folded) {
        AgentId::Medication
    } else {
        AgentId::SymptomChecker
    }
}
