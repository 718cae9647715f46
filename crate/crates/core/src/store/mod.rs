//! Patient record persistence with field-level PHI encryption.
//!
//! Every operation asks the privacy layer for a decision first and records
//! exactly one audit entry, whether it succeeds, is denied or fails.

mod backend;
mod manifest;

use std::collections::HashMap;
use std::sync::Arc;

use chrono::NaiveDate;
use parking_lot::Mutex;
use serde::Serialize;
use serde_json::{json, Value};

pub use backend::{
    BackendError, DocumentStore, FileStore, InMemoryStore, StoredDocument, SCHEMA_VERSION,
};
pub use manifest::{ManifestError, PhiManifest, ENVELOPE_KEY};

use crate::domain::{
    Appointment, AppointmentAction, AppointmentIntent, AppointmentStatus, HistoryEntry, Language,
    PatientRecord, Role,
};
use crate::privacy::{
    Action, Compliance, CryptoError, Decision, DenyReason, KeyRing, Outcome, ResourceClass,
};
use crate::session::SessionContext;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("access denied: {0}")]
    AccessDenied(DenyReason),
    #[error("not found")]
    NotFound,
    #[error("a scheduled appointment already exists on that date")]
    Conflict,
    #[error("stored record failed integrity checks")]
    IntegrityError,
    #[error("invalid record: {0}")]
    InvalidRecord(&'static str),
    #[error("invalid appointment intent: {0}")]
    InvalidIntent(&'static str),
    #[error("storage failure")]
    StorageFailure(#[source] BackendError),
    #[error("field encryption failed")]
    EncryptionFailure,
    #[error("audit log unavailable")]
    AuditUnavailable,
}

impl StoreError {
    fn outcome(&self) -> Outcome {
        match self {
            StoreError::AccessDenied(_) => Outcome::Deny,
            _ => Outcome::Error,
        }
    }
}

impl From<BackendError> for StoreError {
    fn from(e: BackendError) -> Self {
        StoreError::StorageFailure(e)
    }
}

impl From<CryptoError> for StoreError {
    fn from(e: CryptoError) -> Self {
        match e {
            CryptoError::AuthFailure | CryptoError::UnknownKey(_) => StoreError::IntegrityError,
            CryptoError::Entropy | CryptoError::BadKey => StoreError::EncryptionFailure,
        }
    }
}

/// Result of executing an appointment intent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum AppointmentOutcome {
    Created { appointment: Appointment },
    Updated { appointment: Appointment },
    Cancelled { appointment: Appointment },
    Listed { appointments: Vec<Appointment> },
}

/// A PatientRecord with all fields populated and every array non-empty.
/// Used to check manifest paths against the schema.
pub fn schema_sample() -> Value {
    let record = PatientRecord {
        patient_id: "p".into(),
        full_name: "n".into(),
        date_of_birth: NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date"),
        language_pref: Language::En,
        history: vec![HistoryEntry {
            timestamp: chrono::DateTime::UNIX_EPOCH,
            author_id: "a".into(),
            note: "n".into(),
        }],
        appointments: vec![Appointment {
            appointment_id: "x".into(),
            date: NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date"),
            reason: "r".into(),
            status: AppointmentStatus::Scheduled,
        }],
    };
    serde_json::to_value(record).expect("record serializes")
}

#[derive(Debug)]
pub struct RecordStore {
    backend: Arc<dyn DocumentStore>,
    keyring: Arc<KeyRing>,
    manifest: PhiManifest,
    compliance: Arc<Compliance>,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl RecordStore {
    pub fn new(
        backend: Arc<dyn DocumentStore>,
        keyring: Arc<KeyRing>,
        manifest: PhiManifest,
        compliance: Arc<Compliance>,
    ) -> Self {
        RecordStore {
            backend,
            keyring,
            manifest,
            compliance,
            locks: Mutex::new(HashMap::new()),
        }
    }

    pub fn compliance(&self) -> &Arc<Compliance> {
        &self.compliance
    }

    fn patient_lock(&self, patient_id: &str) -> Arc<Mutex<()>> {
        self.locks
            .lock()
            .entry(patient_id.to_owned())
            .or_default()
            .clone()
    }

    /// Patients address their own record; everyone else a patient record.
    fn record_class(session: &SessionContext) -> ResourceClass {
        match session.role() {
            Some(Role::Patient) => ResourceClass::OwnRecord,
            _ => ResourceClass::PatientRecord,
        }
    }

    /// Decides, runs `op` if allowed, and records one audit entry.
    fn gated<T>(
        &self,
        session: &SessionContext,
        action: Action,
        class: ResourceClass,
        audit_action: &str,
        patient_id: &str,
        op: impl FnOnce() -> Result<T, StoreError>,
    ) -> Result<T, StoreError> {
        let result = match self
            .compliance
            .decide(session, action, class, Some(patient_id))
        {
            Decision::Allow => op(),
            Decision::Deny(reason) => Err(StoreError::AccessDenied(reason)),
        };
        self.finish(session, audit_action, class, patient_id, result)
    }

    fn finish<T>(
        &self,
        session: &SessionContext,
        audit_action: &str,
        class: ResourceClass,
        resource_id: &str,
        result: Result<T, StoreError>,
    ) -> Result<T, StoreError> {
        let outcome = match &result {
            Ok(_) => Outcome::Allow,
            Err(e) => e.outcome(),
        };
        self.compliance
            .record(session, audit_action, class.as_str(), resource_id, outcome)
            .map_err(|_| StoreError::AuditUnavailable)?;
        result
    }

    fn load(&self, patient_id: &str) -> Result<StoredDocument, StoreError> {
        self.backend.get(patient_id)?.ok_or(StoreError::NotFound)
    }

    fn decode(&self, doc: StoredDocument) -> Result<PatientRecord, StoreError> {
        let body = self
            .manifest
            .open(doc.body, &doc.patient_id, &self.keyring)?;
        let record: PatientRecord =
            serde_json::from_value(body).map_err(|_| StoreError::IntegrityError)?;
        if record.patient_id != doc.patient_id {
            return Err(StoreError::IntegrityError);
        }
        Ok(record)
    }

    fn encode(&self, record: &PatientRecord) -> Result<StoredDocument, StoreError> {
        let body = serde_json::to_value(record)
            .map_err(|_| StoreError::InvalidRecord("unserializable"))?;
        Ok(StoredDocument {
            patient_id: record.patient_id.clone(),
            schema_version: SCHEMA_VERSION,
            body: self
                .manifest
                .seal(body, &record.patient_id, &self.keyring)?,
        })
    }

    /// Creates or replaces a record. History is append-only: an existing
    /// record's entries must be an unchanged prefix of the new list.
    pub fn put_patient(
        &self,
        record: &PatientRecord,
        session: &SessionContext,
    ) -> Result<(), StoreError> {
        let class = Self::record_class(session);
        self.gated(
            session,
            Action::Write,
            class,
            "record.write",
            &record.patient_id,
            || {
                if record.patient_id.trim().is_empty() {
                    return Err(StoreError::InvalidRecord("empty patient id"));
                }
                if !record.has_unique_scheduled_dates() {
                    return Err(StoreError::Conflict);
                }
                let lock = self.patient_lock(&record.patient_id);
                let _guard = lock.lock();
                if let Some(existing) = self.backend.get(&record.patient_id)? {
                    let existing = self.decode(existing)?;
                    if !record.history.starts_with(&existing.history) {
                        return Err(StoreError::InvalidRecord("history is append-only"));
                    }
                }
                self.backend.put(self.encode(record)?)?;
                Ok(())
            },
        )
    }

    /// Returns the decrypted record, or an error. No partial views.
    pub fn get_patient(
        &self,
        patient_id: &str,
        session: &SessionContext,
    ) -> Result<PatientRecord, StoreError> {
        let class = Self::record_class(session);
        self.gated(
            session,
            Action::Read,
            class,
            "record.read",
            patient_id,
            || self.decode(self.load(patient_id)?),
        )
    }

    /// Appends one history note written by the session's actor.
    pub fn append_history(
        &self,
        patient_id: &str,
        note: &str,
        session: &SessionContext,
    ) -> Result<HistoryEntry, StoreError> {
        let class = Self::record_class(session);
        self.gated(
            session,
            Action::Write,
            class,
            "record.history.append",
            patient_id,
            || {
                if note.trim().is_empty() {
                    return Err(StoreError::InvalidRecord("empty note"));
                }
                let lock = self.patient_lock(patient_id);
                let _guard = lock.lock();
                let mut record = self.decode(self.load(patient_id)?)?;
                let entry = HistoryEntry {
                    timestamp: self.compliance.clock().now(),
                    author_id: session.actor_id().unwrap_or_default().to_owned(),
                    note: note.to_owned(),
                };
                record.history.push(entry.clone());
                self.backend.put(self.encode(&record)?)?;
                Ok(entry)
            },
        )
    }

    /// Executes a parsed appointment intent against `patient_id`'s record.
    /// `target` selects an appointment by id for update and cancel.
    pub fn upsert_appointment(
        &self,
        patient_id: &str,
        intent: &AppointmentIntent,
        session: &SessionContext,
        target: Option<&str>,
    ) -> Result<AppointmentOutcome, StoreError> {
        let audit_action = format!("appointment.{}", intent.action.as_str());
        let action = match intent.action {
            AppointmentAction::Lookup => Action::Read,
            _ => Action::Write,
        };
        if !intent.authorized {
            return self.finish(
                session,
                &audit_action,
                ResourceClass::Appointment,
                patient_id,
                Err(StoreError::AccessDenied(DenyReason::NotPermitted)),
            );
        }
        self.gated(
            session,
            action,
            ResourceClass::Appointment,
            &audit_action,
            patient_id,
            || {
                let lock = self.patient_lock(patient_id);
                let _guard = lock.lock();
                let mut doc = self.load(patient_id)?;
                let mut appointments: Vec<Appointment> = serde_json::from_value(
                    doc.body.get("appointments").cloned().unwrap_or(json!([])),
                )
                .map_err(|_| StoreError::IntegrityError)?;
                let outcome = apply_intent(&mut appointments, intent, target)?;
                if !matches!(outcome, AppointmentOutcome::Listed { .. }) {
                    doc.body["appointments"] =
                        serde_json::to_value(&appointments).expect("appointments serialize");
                    self.backend.put(doc)?;
                }
                Ok(outcome)
            },
        )
    }

    /// Appointments visible to the session: a patient's own, or those of
    /// every patient who granted the doctor consent. One audit entry.
    pub fn list_appointments(
        &self,
        session: &SessionContext,
    ) -> Result<Vec<(String, Appointment)>, StoreError> {
        let patients = match session.role() {
            Some(Role::Patient) => vec![session.actor_id().unwrap_or_default().to_owned()],
            Some(Role::Doctor) => session
                .consent_view
                .patients_for(session.actor_id().unwrap_or_default()),
            _ => Vec::new(),
        };
        let result = match session.role() {
            Some(Role::Patient | Role::Doctor) => patients
                .iter()
                .filter(|p| {
                    self.compliance
                        .decide(session, Action::Read, ResourceClass::Appointment, Some(p))
                        .is_allow()
                })
                .map(|p| -> Result<Vec<(String, Appointment)>, StoreError> {
                    let Some(doc) = self.backend.get(p)? else {
                        return Ok(Vec::new());
                    };
                    let list: Vec<Appointment> = serde_json::from_value(
                        doc.body.get("appointments").cloned().unwrap_or(json!([])),
                    )
                    .map_err(|_| StoreError::IntegrityError)?;
                    Ok(list.into_iter().map(|a| (p.clone(), a)).collect())
                })
                .collect::<Result<Vec<_>, _>>()
                .map(|v| v.into_iter().flatten().collect()),
            _ => match self.compliance.decide(
                session,
                Action::Read,
                ResourceClass::Appointment,
                None,
            ) {
                Decision::Deny(reason) => Err(StoreError::AccessDenied(reason)),
                Decision::Allow => Ok(Vec::new()),
            },
        };
        self.finish(
            session,
            "appointment.list",
            ResourceClass::Appointment,
            "*",
            result,
        )
    }
}

fn apply_intent(
    appointments: &mut Vec<Appointment>,
    intent: &AppointmentIntent,
    target: Option<&str>,
) -> Result<AppointmentOutcome, StoreError> {
    let scheduled_on = |list: &[Appointment], date: NaiveDate, except: Option<usize>| {
        list.iter().enumerate().any(|(i, a)| {
            Some(i) != except && a.status == AppointmentStatus::Scheduled && a.date == date
        })
    };
    let find_target = |list: &[Appointment], by_date: Option<NaiveDate>| -> Option<usize> {
        if let Some(id) = target {
            return list.iter().position(|a| a.appointment_id == id);
        }
        let scheduled = list
            .iter()
            .enumerate()
            .filter(|(_, a)| a.status == AppointmentStatus::Scheduled);
        match by_date {
            Some(d) => scheduled
                .filter(|(_, a)| a.date == d)
                .map(|(i, _)| i)
                .next(),
            None => scheduled.min_by_key(|(_, a)| a.date).map(|(i, _)| i),
        }
    };
    match intent.action {
        AppointmentAction::Create => {
            let date = intent
                .date
                .ok_or(StoreError::InvalidIntent("date required"))?;
            if scheduled_on(appointments, date, None) {
                return Err(StoreError::Conflict);
            }
            let appointment = Appointment {
                appointment_id: format!("appt-{}", appointments.len() + 1),
                date,
                reason: intent.reason.clone(),
                status: AppointmentStatus::Scheduled,
            };
            appointments.push(appointment.clone());
            Ok(AppointmentOutcome::Created { appointment })
        }
        AppointmentAction::Update => {
            let date = intent
                .date
                .ok_or(StoreError::InvalidIntent("date required"))?;
            let i = find_target(appointments, None).ok_or(StoreError::NotFound)?;
            if appointments[i].status != AppointmentStatus::Scheduled {
                return Err(StoreError::NotFound);
            }
            if scheduled_on(appointments, date, Some(i)) {
                return Err(StoreError::Conflict);
            }
            appointments[i].date = date;
            if !intent.reason.trim().is_empty() {
                appointments[i].reason = intent.reason.clone();
            }
            Ok(AppointmentOutcome::Updated {
                appointment: appointments[i].clone(),
            })
        }
        AppointmentAction::Cancel => {
            let i = find_target(appointments, intent.date).ok_or(StoreError::NotFound)?;
            if appointments[i].status != AppointmentStatus::Scheduled {
                return Err(StoreError::NotFound);
            }
            appointments[i].status = AppointmentStatus::Cancelled;
            Ok(AppointmentOutcome::Cancelled {
                appointment: appointments[i].clone(),
            })
        }
        AppointmentAction::Lookup => Ok(AppointmentOutcome::Listed {
            appointments: appointments
                .iter()
                .filter(|a| intent.date.is_none_or(|d| a.date == d))
                .cloned()
                .collect(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::{Clock, FixedClock};
    use crate::domain::ConsentScope;
    use crate::privacy::{AccessMatrix, AuditLog};
    use crate::session::Actor;

    struct Fixture {
        store: RecordStore,
        memory: Arc<InMemoryStore>,
    }

    fn fixture() -> Fixture {
        let clock: Arc<dyn Clock> =
            Arc::new(FixedClock::on(NaiveDate::from_ymd_opt(2025, 4, 1).unwrap()));
        let audit = Arc::new(AuditLog::in_memory(clock.clone()));
        let compliance = Arc::new(Compliance::new(AccessMatrix::standard(), audit, clock));
        let memory = Arc::new(InMemoryStore::new());
        let store = RecordStore::new(
            memory.clone(),
            Arc::new(KeyRing::generate().unwrap()),
            PhiManifest::standard(),
            compliance,
        );
        Fixture { store, memory }
    }

    fn session(f: &Fixture, id: &str, role: Role) -> SessionContext {
        f.store
            .compliance()
            .session(Actor::authenticated(id, role), Language::En)
    }

    fn record(id: &str) -> PatientRecord {
        PatientRecord {
            patient_id: id.into(),
            full_name: "Zed SENTINEL-NAME".into(),
            date_of_birth: NaiveDate::from_ymd_opt(1970, 2, 3).unwrap(),
            language_pref: Language::Ar,
            history: vec![],
            appointments: vec![],
        }
    }

    fn create(date: &str) -> AppointmentIntent {
        AppointmentIntent {
            action: AppointmentAction::Create,
            date: Some(date.parse().unwrap()),
            reason: "routine follow-up".into(),
            authorized: true,
        }
    }

    fn audit_len(f: &Fixture) -> u64 {
        f.store.compliance().audit_log().len()
    }

    #[test]
    fn owner_round_trip_and_opacity() {
        let f = fixture();
        let p = session(&f, "p1", Role::Patient);
        f.store.put_patient(&record("p1"), &p).unwrap();
        f.store.append_history("p1", "SENTINEL-NOTE", &p).unwrap();
        let back = f.store.get_patient("p1", &p).unwrap();
        assert_eq!(back.full_name, "Zed SENTINEL-NAME");
        assert_eq!(back.history[0].note, "SENTINEL-NOTE");
        let raw = String::from_utf8(f.memory.raw_bytes()).unwrap();
        assert!(!raw.contains("SENTINEL"));
        assert!(!raw.contains("1970-02-03"));
        assert_eq!(audit_len(&f), 3);
    }

    #[test]
    fn access_rules() {
        let f = fixture();
        let p = session(&f, "p1", Role::Patient);
        let d = session(&f, "d1", Role::Doctor);
        let a = session(&f, "a1", Role::Auditor);
        f.store.put_patient(&record("p1"), &p).unwrap();
        assert!(matches!(
            f.store.put_patient(&record("p1"), &a),
            Err(StoreError::AccessDenied(DenyReason::NotPermitted))
        ));
        assert!(matches!(
            f.store.get_patient("p1", &d),
            Err(StoreError::AccessDenied(DenyReason::NoConsent))
        ));
        assert!(matches!(
            f.store.get_patient("p1", &session(&f, "p2", Role::Patient)),
            Err(StoreError::AccessDenied(DenyReason::NotOwner))
        ));
        f.store
            .compliance()
            .grant_consent(&p, "p1", "d1", ConsentScope::WriteRecord)
            .unwrap();
        f.store.append_history("p1", "seen by doctor", &d).unwrap();
        assert_eq!(f.store.get_patient("p1", &d).unwrap().history.len(), 1);
        // An existing record's history cannot be rewritten.
        assert!(matches!(
            f.store.put_patient(&record("p1"), &p),
            Err(StoreError::InvalidRecord(_))
        ));
    }

    #[test]
    fn missing_record_is_not_found_after_access_check() {
        let f = fixture();
        let p = session(&f, "p1", Role::Patient);
        assert!(matches!(
            f.store.get_patient("p1", &p),
            Err(StoreError::NotFound)
        ));
        let entries = f.store.compliance().audit_log().entries().unwrap();
        assert_eq!(entries.len(), 1);
        assert_eq!(entries[0].outcome, Outcome::Error);
    }

    #[test]
    fn tampered_ciphertext_is_an_integrity_error() {
        let f = fixture();
        let p = session(&f, "p1", Role::Patient);
        f.store.put_patient(&record("p1"), &p).unwrap();
        let mut doc = f.memory.get("p1").unwrap().unwrap();
        let ct = doc.body["full_name"][ENVELOPE_KEY]["ciphertext"]
            .as_str()
            .unwrap()
            .to_owned();
        let mut bytes =
            base64::Engine::decode(&base64::engine::general_purpose::STANDARD, &ct).unwrap();
        bytes[0] ^= 1;
        doc.body["full_name"][ENVELOPE_KEY]["ciphertext"] = json!(base64::Engine::encode(
            &base64::engine::general_purpose::STANDARD,
            &bytes
        ));
        f.memory.put(doc).unwrap();
        assert!(matches!(
            f.store.get_patient("p1", &p),
            Err(StoreError::IntegrityError)
        ));
    }

    #[test]
    fn appointment_lifecycle() {
        let f = fixture();
        let p = session(&f, "p1", Role::Patient);
        f.store.put_patient(&record("p1"), &p).unwrap();
        let before = audit_len(&f);
        let created = f
            .store
            .upsert_appointment("p1", &create("2025-04-10"), &p, None)
            .unwrap();
        let AppointmentOutcome::Created { appointment } = created else {
            panic!()
        };
        assert_eq!(appointment.status, AppointmentStatus::Scheduled);
        assert_eq!(appointment.reason, "routine follow-up");
        assert!(matches!(
            f.store
                .upsert_appointment("p1", &create("2025-04-10"), &p, None),
            Err(StoreError::Conflict)
        ));
        let mut unauthorized = create("2025-04-11");
        unauthorized.authorized = false;
        assert!(matches!(
            f.store.upsert_appointment("p1", &unauthorized, &p, None),
            Err(StoreError::AccessDenied(_))
        ));
        let update = AppointmentIntent {
            action: AppointmentAction::Update,
            date: NaiveDate::from_ymd_opt(2025, 4, 17),
            ..create("2025-04-10")
        };
        let AppointmentOutcome::Updated { appointment } =
            f.store.upsert_appointment("p1", &update, &p, None).unwrap()
        else {
            panic!()
        };
        assert_eq!(
            appointment.date,
            NaiveDate::from_ymd_opt(2025, 4, 17).unwrap()
        );
        let cancel = AppointmentIntent {
            action: AppointmentAction::Cancel,
            ..create("2025-04-17")
        };
        f.store.upsert_appointment("p1", &cancel, &p, None).unwrap();
        assert!(matches!(
            f.store.upsert_appointment("p1", &cancel, &p, None),
            Err(StoreError::NotFound)
        ));
        // The date is free again once cancelled.
        f.store
            .upsert_appointment("p1", &create("2025-04-17"), &p, None)
            .unwrap();
        let listed = f.store.list_appointments(&p).unwrap();
        assert_eq!(listed.len(), 2);
        // One entry per operation, failures included.
        assert_eq!(audit_len(&f) - before, 8);
        // Appointment changes never disturb the encrypted fields.
        assert_eq!(
            f.store.get_patient("p1", &p).unwrap().full_name,
            "Zed SENTINEL-NAME"
        );
    }

    #[test]
    fn doctor_lists_only_consented_patients() {
        let f = fixture();
        let p1 = session(&f, "p1", Role::Patient);
        let p2 = session(&f, "p2", Role::Patient);
        let d = session(&f, "d1", Role::Doctor);
        for (p, s) in [("p1", &p1), ("p2", &p2)] {
            f.store.put_patient(&record(p), s).unwrap();
            f.store
                .upsert_appointment(p, &create("2025-04-10"), s, None)
                .unwrap();
        }
        assert!(f.store.list_appointments(&d).unwrap().is_empty());
        f.store
            .compliance()
            .grant_consent(&p2, "p2", "d1", ConsentScope::ReadRecord)
            .unwrap();
        let listed = f.store.list_appointments(&d).unwrap();
        assert_eq!(listed.len(), 1);
        assert_eq!(listed[0].0, "p2");
        assert!(matches!(
            f.store.list_appointments(&session(&f, "a1", Role::Auditor)),
            Err(StoreError::AccessDenied(_))
        ));
    }
}
