//! The scripted trilingual scenario: a patient reports symptoms in Arabic,
//! gets medication advice under the French template, books a follow-up,
//! and a consented doctor reviews the case in English. Runs against an
//! in-process server over real HTTP with the stub adapter and a fixed clock.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use carebridge_core::clock::{Clock, FixedClock};
use carebridge_core::privacy::{parse_log, verify_log_bytes, ChainHead, VerifyOutcome};
use chrono::NaiveDate;
use serde_json::{json, Value};

use crate::app::{build_state, write_head_file};
use crate::config::{AdapterKind, Config};
use crate::logging::LogCapture;

pub const PATIENT: (&str, &str) = ("p-1001", "demo-patient-pass");
pub const DOCTOR: (&str, &str) = ("d-2001", "demo-doctor-pass");
pub const AUDITOR: (&str, &str) = ("a-3001", "demo-auditor-pass");

pub const SENTINEL_NAME: &str = "Zed Sentinel-Qx";
pub const SYMPTOMS_AR: &str = "عندي حمى وسعال منذ يومين";
pub const QUESTION_FR: &str = "J'ai de la fièvre depuis deux jours, que puis-je prendre ?";
pub const BOOKING_AR: &str = "أريد حجز موعد للمتابعة";
pub const DOCTOR_EN: &str = "Patient reports fever and cough for two days";

/// Expected audit entries after the whole script.
pub const EXPECTED_AUDIT_ENTRIES: u64 = 17;

pub fn demo_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2025, 4, 1).expect("valid date")
}

#[derive(Debug, Clone)]
pub struct DemoOptions {
    /// Fixture directory; embedded fixtures when `None`.
    pub fixtures: Option<PathBuf>,
    /// Receives `audit.log`, `audit.log.head` and `records.jsonl`.
    pub workdir: PathBuf,
    /// Log lines emitted while the demo ran, if captured.
    pub log: Option<LogCapture>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct DemoReport {
    pub transcript: Vec<String>,
    pub checks: Vec<Check>,
    /// Entry count per audit action, in action order.
    pub audit_summary: BTreeMap<String, u64>,
    pub audit_entries: u64,
    pub audit_path: PathBuf,
    pub head_path: PathBuf,
    pub store_path: PathBuf,
}

impl DemoReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DemoError {
    #[error("demo setup failed: {0}")]
    Setup(String),
    #[error("http call failed: {0}")]
    Http(String),
}

struct Client {
    base: String,
    agent: ureq::Agent,
}

struct Reply {
    status: u16,
    body: Value,
}

impl Client {
    fn call(
        &self,
        method: &str,
        path: &str,
        token: Option<&str>,
        body: Option<Value>,
    ) -> Result<Reply, DemoError> {
        let url = format!("{}{}", self.base, path);
        let auth = token.map(|t| format!("Bearer {t}"));
        let result = match (method, body) {
            ("GET", _) => {
                let mut r = self.agent.get(&url);
                if let Some(a) = &auth {
                    r = r.header("Authorization", a);
                }
                r.call()
            }
            ("DELETE", _) => {
                let mut r = self.agent.delete(&url);
                if let Some(a) = &auth {
                    r = r.header("Authorization", a);
                }
                r.call()
            }
            (m, body) => {
                let mut r = if m == "PUT" {
                    self.agent.put(&url)
                } else {
                    self.agent.post(&url)
                };
                if let Some(a) = &auth {
                    r = r.header("Authorization", a);
                }
                r.send_json(body.unwrap_or(Value::Null))
            }
        };
        let mut response = result.map_err(|e| DemoError::Http(e.to_string()))?;
        let status = response.status().as_u16();
        let body = response
            .body_mut()
            .read_json()
            .map_err(|e| DemoError::Http(e.to_string()))?;
        Ok(Reply { status, body })
    }

    fn login(&self, (actor, credential): (&str, &str), role: &str) -> Result<String, DemoError> {
        let r = self.call(
            "POST",
            "/api/v1/auth/login",
            None,
            Some(json!({"actor_id": actor, "role": role, "credential": credential})),
        )?;
        r.body["token"]
            .as_str()
            .map(str::to_owned)
            .ok_or_else(|| DemoError::Http(format!("login for {actor} failed with {}", r.status)))
    }
}

struct Script {
    transcript: Vec<String>,
    checks: Vec<Check>,
}

impl Script {
    fn say(&mut self, line: impl Into<String>) {
        self.transcript.push(line.into());
    }

    fn check(&mut self, name: impl Into<String>, passed: bool) {
        self.checks.push(Check {
            name: name.into(),
            passed,
        });
    }
}

fn reset(path: &Path) -> Result<(), DemoError> {
    match std::fs::remove_file(path) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
        Err(e) => Err(DemoError::Setup(e.to_string())),
    }
}

pub fn run_demo(options: &DemoOptions) -> Result<DemoReport, DemoError> {
    std::fs::create_dir_all(&options.workdir).map_err(|e| DemoError::Setup(e.to_string()))?;
    let audit_path = options.workdir.join("audit.log");
    let head_path = options.workdir.join("audit.log.head");
    let store_path = options.workdir.join("records.jsonl");
    for p in [&audit_path, &head_path, &store_path] {
        reset(p)?;
    }
    let config = Config {
        fixtures_dir: options.fixtures.clone(),
        audit_path: audit_path.clone(),
        store_path: store_path.clone(),
        adapter: AdapterKind::Stub,
        ..Config::default()
    };
    let master_hex = hex::encode(
        carebridge_core::privacy::SecretKey::random()
            .map_err(|e| DemoError::Setup(e.to_string()))?
            .expose(),
    );
    let clock: Arc<dyn Clock> = Arc::new(FixedClock::on(demo_date()));
    let state =
        build_state(&config, &master_hex, clock).map_err(|e| DemoError::Setup(e.to_string()))?;
    let audit = state.compliance.audit_log().clone();
    let log_start = options.log.as_ref().map_or(0, LogCapture::len);

    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()
        .map_err(|e| DemoError::Setup(e.to_string()))?;
    let listener = runtime
        .block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))
        .map_err(|e| DemoError::Setup(e.to_string()))?;
    let addr = listener
        .local_addr()
        .map_err(|e| DemoError::Setup(e.to_string()))?;
    let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
    let server = runtime.spawn(crate::serve(state, listener, async {
        let _ = stop_rx.await;
    }));

    let client = Client {
        base: format!("http://{addr}"),
        agent: ureq::Agent::config_builder()
            .http_status_as_error(false)
            .build()
            .new_agent(),
    };
    let mut s = Script {
        transcript: Vec::new(),
        checks: Vec::new(),
    };
    let scripted = script(&client, &mut s, &audit);

    let _ = stop_tx.send(());
    let _ = runtime.block_on(server);
    drop(runtime);
    scripted?;

    write_head_file(&audit, &head_path).map_err(|e| DemoError::Setup(e.to_string()))?;
    let audit_bytes = std::fs::read(&audit_path).map_err(|e| DemoError::Setup(e.to_string()))?;
    let store_bytes = std::fs::read(&store_path).map_err(|e| DemoError::Setup(e.to_string()))?;
    let head: ChainHead = serde_json::from_slice(
        &std::fs::read(&head_path).map_err(|e| DemoError::Setup(e.to_string()))?,
    )
    .map_err(|e| DemoError::Setup(e.to_string()))?;

    let entries = parse_log(&audit_bytes).unwrap_or_default();
    let mut audit_summary = BTreeMap::new();
    for e in &entries {
        *audit_summary.entry(e.action.clone()).or_insert(0) += 1;
    }
    s.check(
        format!("audit entry count is {EXPECTED_AUDIT_ENTRIES}"),
        entries.len() as u64 == EXPECTED_AUDIT_ENTRIES,
    );
    s.check(
        "offline audit verification against head is ok",
        verify_log_bytes(&audit_bytes, Some(&head)) == VerifyOutcome::Ok,
    );

    let logs = options
        .log
        .as_ref()
        .map(|l| l.snapshot()[log_start..].to_vec())
        .unwrap_or_default();
    if options.log.is_some() {
        s.check("request log lines were captured", !logs.is_empty());
    }
    for sentinel in [
        SENTINEL_NAME,
        SYMPTOMS_AR,
        QUESTION_FR,
        BOOKING_AR,
        DOCTOR_EN,
        "حمى",
        "fièvre",
    ] {
        let needle = sentinel.as_bytes();
        let absent = |hay: &[u8]| !hay.windows(needle.len()).any(|w| w == needle);
        s.check(
            format!(
                "sentinel {:?} absent from store, audit log and server logs",
                sentinel
            ),
            absent(&store_bytes) && absent(&audit_bytes) && absent(&logs),
        );
    }

    Ok(DemoReport {
        transcript: s.transcript,
        checks: s.checks,
        audit_summary,
        audit_entries: entries.len() as u64,
        audit_path,
        head_path,
        store_path,
    })
}

fn script(
    client: &Client,
    s: &mut Script,
    audit: &carebridge_core::privacy::AuditLog,
) -> Result<(), DemoError> {
    let mut expected = 0u64;
    let mut step = |s: &mut Script, label: &str, entries: u64| {
        expected += entries;
        s.check(
            format!("audit count after {label} is {expected}"),
            audit.len() == expected,
        );
    };

    let patient = client.login(PATIENT, "patient")?;
    let doctor = client.login(DOCTOR, "doctor")?;
    let auditor = client.login(AUDITOR, "auditor")?;
    s.say("== login: p-1001 (patient), d-2001 (doctor), a-3001 (auditor)");
    step(s, "logins", 3);

    let record = json!({
        "patient_id": PATIENT.0, "full_name": SENTINEL_NAME, "date_of_birth": "1985-02-14",
        "language_pref": "ar", "history": [], "appointments": [],
    });
    let r = client.call(
        "PUT",
        "/api/v1/patients/p-1001",
        Some(&patient),
        Some(record),
    )?;
    s.say(format!("== patient stores own record -> {}", r.status));
    s.check("patient record stored", r.status == 200);
    step(s, "record write", 1);

    // Turn 1: Arabic symptoms, automatic routing.
    let r = client.call(
        "POST",
        "/api/v1/chat",
        Some(&patient),
        Some(json!({"message": SYMPTOMS_AR, "agent": "auto"})),
    )?;
    s.say(format!("[patient] {SYMPTOMS_AR}"));
    s.say(format!(
        "  -> {} ({}) condition={} severity={} follow_up={}",
        r.body["agent_used"],
        r.body["language_used"],
        r.body["condition"],
        r.body["severity"],
        r.body["follow_up"]
    ));
    s.check("turn 1 detected as ar", r.body["language_used"] == "ar");
    s.check(
        "turn 1 routed to symptom_checker",
        r.body["agent_used"] == "symptom_checker",
    );
    s.check(
        "turn 1 assessment is flu/medium",
        r.body["condition"] == "flu" && r.body["severity"] == "medium",
    );
    step(s, "turn 1", 1);
    let note = format!(
        "{SYMPTOMS_AR} | {}/{}",
        r.body["condition"], r.body["severity"]
    );
    let r = client.call(
        "POST",
        "/api/v1/patients/p-1001/history",
        Some(&patient),
        Some(json!({"note": note})),
    )?;
    s.check("turn 1 saved to history", r.status == 201);
    step(s, "history append", 1);

    // Turn 2: French medication question, French template.
    let r = client.call(
        "POST",
        "/api/v1/chat",
        Some(&patient),
        Some(json!({"message": QUESTION_FR, "agent": "medication"})),
    )?;
    s.say(format!("[patient] {QUESTION_FR}"));
    s.say(format!(
        "  -> {} ({}) escalation={}",
        r.body["agent_used"], r.body["language_used"], r.body["escalation"]
    ));
    for item in r.body["advice"].as_array().into_iter().flatten() {
        s.say(format!("     - {}", item.as_str().unwrap_or_default()));
    }
    s.say(format!(
        "     reasoning: {}",
        r.body["reasoning"].as_str().unwrap_or_default()
    ));
    s.check("turn 2 detected as fr", r.body["language_used"] == "fr");
    s.check(
        "turn 2 advice is the French supportive-care answer",
        r.body["advice"][0] == "Buvez beaucoup de liquides" && r.body["escalation"] == false,
    );
    step(s, "turn 2", 1);
    let note = format!(
        "{QUESTION_FR} | {}",
        r.body["reasoning"].as_str().unwrap_or_default()
    );
    let r = client.call(
        "POST",
        "/api/v1/patients/p-1001/history",
        Some(&patient),
        Some(json!({"note": note})),
    )?;
    s.check("turn 2 saved to history", r.status == 201);
    step(s, "history append", 1);

    let r = client.call(
        "POST",
        "/api/v1/consent",
        Some(&patient),
        Some(json!({"grantee_id": DOCTOR.0, "scope": "read_record"})),
    )?;
    let grant_id = r.body["grant_id"].as_str().unwrap_or_default().to_owned();
    s.say(format!(
        "== patient grants d-2001 read_record -> {} {}",
        r.status, grant_id
    ));
    s.check("consent granted", r.status == 201);
    step(s, "consent grant", 1);

    let r = client.call(
        "POST",
        "/api/v1/appointments",
        Some(&patient),
        Some(json!({"message": BOOKING_AR})),
    )?;
    s.say(format!("[patient] {BOOKING_AR}"));
    s.say(format!(
        "  -> {} {} {} {}",
        r.status,
        r.body["result"],
        r.body["appointment"]["appointment_id"],
        r.body["appointment"]["date"]
    ));
    s.check(
        "follow-up booked for 2025-04-10",
        r.status == 201 && r.body["appointment"]["date"] == "2025-04-10",
    );
    step(s, "booking", 2);

    // Turn 3: the doctor, in English.
    let r = client.call(
        "POST",
        "/api/v1/chat",
        Some(&doctor),
        Some(json!({"message": DOCTOR_EN, "agent": "symptom_checker"})),
    )?;
    s.say(format!("[doctor] {DOCTOR_EN}"));
    s.say(format!(
        "  -> {} ({}) condition={} severity={}",
        r.body["agent_used"], r.body["language_used"], r.body["condition"], r.body["severity"]
    ));
    s.check("turn 3 detected as en", r.body["language_used"] == "en");
    step(s, "turn 3", 1);

    let r = client.call("GET", "/api/v1/patients/p-1001", Some(&doctor), None)?;
    let history = r.body["history"].as_array().map_or(0, Vec::len);
    s.say(format!(
        "== doctor reads p-1001 -> {} ({} history entries)",
        r.status, history
    ));
    s.check(
        "consented doctor reads the full record",
        r.status == 200 && r.body["full_name"] == SENTINEL_NAME && history == 2,
    );
    step(s, "doctor read", 1);

    let r = client.call("GET", "/api/v1/appointments", Some(&doctor), None)?;
    let n = r.body["appointments"].as_array().map_or(0, Vec::len);
    s.say(format!(
        "== doctor lists appointments -> {} ({n})",
        r.status
    ));
    s.check(
        "doctor sees the consented appointment",
        r.status == 200 && n == 1,
    );
    step(s, "doctor list", 1);

    let r = client.call("GET", "/api/v1/audit/verify", Some(&auditor), None)?;
    s.say(format!(
        "== auditor verifies chain -> {} {}",
        r.status, r.body["status"]
    ));
    s.check(
        "live audit chain verifies",
        r.status == 200 && r.body["status"] == "ok",
    );
    step(s, "audit verify", 1);

    let r = client.call(
        "DELETE",
        &format!("/api/v1/consent/{grant_id}"),
        Some(&patient),
        None,
    )?;
    s.say(format!("== patient revokes {grant_id} -> {}", r.status));
    step(s, "consent revoke", 1);
    let r = client.call("GET", "/api/v1/patients/p-1001", Some(&doctor), None)?;
    s.say(format!(
        "== doctor reads p-1001 after revocation -> {}",
        r.status
    ));
    s.check("revoked consent denies the doctor", r.status == 403);
    step(s, "denied read", 1);
    Ok(())
}
