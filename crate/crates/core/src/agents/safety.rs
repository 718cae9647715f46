//! Host-side safety filters applied around the completion adapter.

use std::collections::BTreeMap;

use unicode_normalization::UnicodeNormalization;

use crate::domain::Language;
use crate::fixtures::{FixtureError, FixtureSource};

#[derive(Debug, thiserror::Error)]
pub enum SafetyError {
    #[error(transparent)]
    Fixture(#[from] FixtureError),
    #[error("malformed lexicon fixture: {0}")]
    Malformed(String),
    #[error("lexicon has no terms for {0}")]
    EmptyLanguage(Language),
    #[error("prescription deny-list is empty")]
    EmptyDenyList,
}

/// Folds text for lexicon matching: NFC, lowercase, Arabic diacritics and
/// tatweel removed, alef variants unified, typographic apostrophes made
/// ASCII, whitespace runs collapsed to one space.
pub fn normalize_text(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for c in text.nfc().flat_map(char::to_lowercase) {
        if c.is_whitespace() {
            pending_space = !out.is_empty();
            continue;
        }
        let c = match c {
            '\u{064B}'..='\u{065F}' | '\u{0670}' | '\u{0640}' => continue,
            'أ' | 'إ' | 'آ' | 'ٱ' => 'ا',
            '\u{2019}' | '\u{2018}' | '\u{02BC}' | '`' => '\'',
            '\u{2010}' | '\u{2011}' => '-',
            other => other,
        };
        if pending_space {
            out.push(' ');
            pending_space = false;
        }
        out.push(c);
    }
    out
}

/// Emergency terms per language. Input is checked against every language's
/// terms, so a mixed-language message cannot slip past.
#[derive(Debug, Clone)]
pub struct EmergencyLexicon {
    terms: BTreeMap<Language, Vec<String>>,
}

impl EmergencyLexicon {
    pub fn new(terms: BTreeMap<Language, Vec<String>>) -> Result<Self, SafetyError> {
        let mut normalized = BTreeMap::new();
        for language in Language::ALL {
            let list: Vec<String> = terms
                .get(&language)
                .into_iter()
                .flatten()
                .map(|t| normalize_text(t))
                .filter(|t| !t.is_empty())
                .collect();
            if list.is_empty() {
                return Err(SafetyError::EmptyLanguage(language));
            }
            normalized.insert(language, list);
        }
        Ok(EmergencyLexicon { terms: normalized })
    }

    /// Loads `lexicon/emergency.json`, an object keyed by language code.
    pub fn load(source: &FixtureSource) -> Result<Self, SafetyError> {
        let raw = source.read("lexicon/emergency.json")?;
        let parsed: BTreeMap<Language, Vec<String>> =
            serde_json::from_str(&raw).map_err(|e| SafetyError::Malformed(e.to_string()))?;
        EmergencyLexicon::new(parsed)
    }

    pub fn embedded() -> Self {
        EmergencyLexicon::load(&FixtureSource::Embedded).expect("embedded lexicon is valid")
    }

    pub fn matches(&self, input: &str) -> bool {
        let folded = normalize_text(input);
        self.terms
            .values()
            .flatten()
            .any(|term| folded.contains(term.as_str()))
    }

    pub fn terms(&self, language: Language) -> &[String] {
        &self.terms[&language]
    }
}

/// Prescription and controlled-drug stems that must never appear in advice.
#[derive(Debug, Clone)]
pub struct PrescriptionDenyList {
    stems: Vec<String>,
}

impl PrescriptionDenyList {
    pub fn new(stems: impl IntoIterator<Item = String>) -> Result<Self, SafetyError> {
        let stems: Vec<String> = stems
            .into_iter()
            .map(|s| normalize_text(&s))
            .filter(|s| !s.is_empty())
            .collect();
        if stems.is_empty() {
            return Err(SafetyError::EmptyDenyList);
        }
        Ok(PrescriptionDenyList { stems })
    }

    /// Loads `lexicon/prescription_denylist.json`, a JSON array of stems.
    pub fn load(source: &FixtureSource) -> Result<Self, SafetyError> {
        let raw = source.read("lexicon/prescription_denylist.json")?;
        let parsed: Vec<String> =
            serde_json::from_str(&raw).map_err(|e| SafetyError::Malformed(e.to_string()))?;
        PrescriptionDenyList::new(parsed)
    }

    pub fn embedded() -> Self {
        PrescriptionDenyList::load(&FixtureSource::Embedded).expect("embedded deny-list is valid")
    }

    pub fn matches(&self, text: &str) -> bool {
        let folded = normalize_text(text);
        self.stems.iter().any(|s| folded.contains(s.as_str()))
    }

    pub fn stems(&self) -> &[String] {
        &self.stems
    }
}
