//! Boundary parsers for untrusted completion output.
//!
//! Each parser accepts exactly one JSON object (surrounding whitespace only)
//! with exactly the declared keys. Error reasons name schema keys only and
//! never echo input text.

use std::collections::HashSet;
use std::fmt;
use std::sync::LazyLock;

use chrono::NaiveDate;
use regex::Regex;
use serde::de::{self, Deserializer, MapAccess, Visitor};
use serde::Deserialize;
use serde_json::Value;

use super::{AppointmentAction, AppointmentIntent, MedicationAdvice, Severity, SymptomAssessment};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("schema violation: {reason}")]
pub struct SchemaError {
    pub reason: String,
}

impl SchemaError {
    pub(crate) fn new(reason: impl Into<String>) -> Self {
        SchemaError {
            reason: reason.into(),
        }
    }
}

static DOSAGE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\d+(?:[.,]\d+)?\s?(?:mg|ml|mcg|g|iu)\b").expect("dosage pattern compiles")
});

static ISO_DATE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\d{4}-\d{2}-\d{2}$").expect("date pattern compiles"));

/// True when `text` names an amount with a unit (e.g. "500 mg", "5ml").
pub fn contains_dosage(text: &str) -> bool {
    DOSAGE.is_match(text)
}

/// A JSON object that remembers key order and rejects duplicate keys.
struct StrictObject(Vec<(String, Value)>);

impl<'de> Deserialize<'de> for StrictObject {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct ObjectVisitor;

        impl<'de> Visitor<'de> for ObjectVisitor {
            type Value = StrictObject;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a JSON object")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<StrictObject, A::Error> {
                let mut seen = HashSet::new();
                let mut entries = Vec::new();
                while let Some((key, value)) = map.next_entry::<String, Value>()? {
                    if !seen.insert(key.clone()) {
                        return Err(de::Error::custom("duplicate key"));
                    }
                    entries.push((key, value));
                }
                Ok(StrictObject(entries))
            }
        }

        deserializer.deserialize_map(ObjectVisitor)
    }
}

/// Splits `raw` into exactly the `expected` fields, in the order given.
fn exact_fields(raw: &str, expected: &[&'static str]) -> Result<Vec<Value>, SchemaError> {
    let object: StrictObject = serde_json::from_str(raw).map_err(|e| {
        SchemaError::new(match e.classify() {
            _ if e.to_string().starts_with("duplicate key") => "duplicate key",
            serde_json::error::Category::Data => "not a single JSON object",
            serde_json::error::Category::Eof => "truncated JSON",
            _ => "not valid JSON or trailing text present",
        })
    })?;

    let mut slots: Vec<Option<Value>> = vec![None; expected.len()];
    for (key, value) in object.0 {
        match expected.iter().position(|k| *k == key) {
            Some(i) => slots[i] = Some(value),
            None => return Err(SchemaError::new("unexpected key")),
        }
    }
    slots
        .into_iter()
        .zip(expected)
        .map(|(slot, key)| slot.ok_or_else(|| SchemaError::new(format!("missing key `{key}`"))))
        .collect()
}

fn non_blank(value: Value, key: &str) -> Result<String, SchemaError> {
    match value {
        Value::String(s) if !s.trim().is_empty() => Ok(s),
        Value::String(_) => Err(SchemaError::new(format!("`{key}` must be non-empty"))),
        _ => Err(SchemaError::new(format!("`{key}` must be a string"))),
    }
}

fn boolean(value: Value, key: &str) -> Result<bool, SchemaError> {
    value
        .as_bool()
        .ok_or_else(|| SchemaError::new(format!("`{key}` must be a boolean")))
}

pub fn parse_symptom_assessment(raw: &str) -> Result<SymptomAssessment, SchemaError> {
    let mut fields = exact_fields(raw, &["condition", "severity", "follow_up"])?.into_iter();
    let (condition, severity, follow_up) = (
        fields.next().unwrap_or_default(),
        fields.next().unwrap_or_default(),
        fields.next().unwrap_or_default(),
    );

    let condition = match condition {
        Value::Null => None,
        other => Some(non_blank(other, "condition")?),
    };
    let severity = severity
        .as_str()
        .and_then(Severity::from_token)
        .ok_or_else(|| SchemaError::new("`severity` not in {low, medium, high, unknown}"))?;
    let follow_up = boolean(follow_up, "follow_up")?;

    if condition.is_none() && !matches!(severity, Severity::Unknown | Severity::High) {
        return Err(SchemaError::new(
            "null `condition` requires severity unknown or high",
        ));
    }
    Ok(SymptomAssessment {
        condition,
        severity,
        follow_up,
    })
}

pub fn parse_medication_advice(raw: &str) -> Result<MedicationAdvice, SchemaError> {
    let mut fields = exact_fields(raw, &["advice", "reasoning", "escalation"])?.into_iter();
    let (advice, reasoning, escalation) = (
        fields.next().unwrap_or_default(),
        fields.next().unwrap_or_default(),
        fields.next().unwrap_or_default(),
    );

    let Value::Array(items) = advice else {
        return Err(SchemaError::new("`advice` must be a list"));
    };
    let advice = items
        .into_iter()
        .map(|item| non_blank(item, "advice[]"))
        .collect::<Result<Vec<_>, _>>()?;
    let reasoning = non_blank(reasoning, "reasoning")?;
    let escalation = boolean(escalation, "escalation")?;

    if advice.is_empty() && !escalation {
        return Err(SchemaError::new("empty `advice` requires escalation"));
    }
    if advice.iter().any(|a| contains_dosage(a)) {
        return Err(SchemaError::new("`advice` must not specify a dosage"));
    }
    Ok(MedicationAdvice {
        advice,
        reasoning,
        escalation,
    })
}

pub fn parse_appointment_intent(raw: &str) -> Result<AppointmentIntent, SchemaError> {
    let mut fields = exact_fields(raw, &["action", "date", "reason", "authorized"])?.into_iter();
    let (action, date, reason, authorized) = (
        fields.next().unwrap_or_default(),
        fields.next().unwrap_or_default(),
        fields.next().unwrap_or_default(),
        fields.next().unwrap_or_default(),
    );

    let action = action
        .as_str()
        .and_then(AppointmentAction::from_token)
        .ok_or_else(|| SchemaError::new("`action` not in {create, update, cancel, lookup}"))?;
    let date = match date {
        Value::Null => None,
        Value::String(s) => Some(parse_iso_date(&s)?),
        _ => return Err(SchemaError::new("`date` must be a string or null")),
    };
    let reason = non_blank(reason, "reason")?;
    let authorized = boolean(authorized, "authorized")?;

    Ok(AppointmentIntent {
        action,
        date,
        reason,
        authorized,
    })
}

fn parse_iso_date(s: &str) -> Result<NaiveDate, SchemaError> {
    if !ISO_DATE.is_match(s) {
        return Err(SchemaError::new("`date` must be YYYY-MM-DD"));
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map_err(|_| SchemaError::new("`date` is not a calendar date"))
}
