//! Acceptance run: one line per criterion, exit status 1 if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use carebridge_core::agents::{
    authorized_for, run_appointment_agent, run_medication_agent, run_symptom_checker, AdapterError,
    AgentRuntime, Disposition, EmergencyLexicon, PrescriptionDenyList, PromptTemplate, StubAdapter,
    TemplateSet, DATE_WINDOW_DAYS,
};
use carebridge_core::canonical::canonical_serialize;
use carebridge_core::clock::{Clock, FixedClock};
use carebridge_core::domain::{
    parse_appointment_intent, parse_medication_advice, parse_symptom_assessment, AppointmentIntent,
    ConsentScope, Language, MedicationAdvice, Role, Severity, SymptomAssessment,
};
use carebridge_core::fixtures::{bundled_dir, FixtureSource};
use carebridge_core::orchestrator::langid::{arabic_share, parse_labeled, ARABIC_SHARE};
use carebridge_core::orchestrator::{LanguageDetector, Orchestrator, ToolRegistry};
use carebridge_core::privacy::{
    decrypt_field, encrypt_field, encrypt_field_with_nonce, parse_log, verify_chain,
    verify_chain_against, verify_log_bytes, AccessMatrix, Action, AuditEntry, AuditEvent, AuditLog,
    Compliance, CryptoError, Decision, KeyRing, Outcome, ResourceClass, SecretKey, VerifyOutcome,
};
use carebridge_core::session::{Actor, SessionContext};
use carebridge_gateway::demo::{run_demo, DemoOptions};
use carebridge_gateway::logging::install_capture;
use chrono::{Duration as Days, NaiveDate};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use serde_json::{json, Map, Value};

type Outcome_ = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome_);

fn today() -> NaiveDate {
    NaiveDate::from_ymd_opt(2025, 4, 1).unwrap()
}

fn clock() -> Arc<dyn Clock> {
    Arc::new(FixedClock::on(today()))
}

fn compliance() -> Arc<Compliance> {
    let clock = clock();
    Arc::new(Compliance::new(
        AccessMatrix::standard(),
        Arc::new(AuditLog::in_memory(clock.clone())),
        clock,
    ))
}

fn session(c: &Compliance, role: Option<Role>) -> SessionContext {
    let actor = match role {
        Some(Role::Patient) => Actor::authenticated("p-1", Role::Patient),
        Some(Role::Doctor) => Actor::authenticated("d-1", Role::Doctor),
        Some(Role::Auditor) => Actor::authenticated("a-1", Role::Auditor),
        None => Actor::Anonymous,
    };
    c.session(actor, Language::En)
}

fn fixed(
    raw: String,
) -> impl Fn(&PromptTemplate, &str) -> Result<String, AdapterError> + Send + Sync {
    move |_: &PromptTemplate, _: &str| Ok(raw.clone())
}

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !($cond) {
            return Err(format!($($msg)+));
        }
    };
}

// ------------------------------------------------------------ fuzzing

fn random_json(rng: &mut StdRng, depth: u32) -> Value {
    match rng.gen_range(0..if depth == 0 { 5 } else { 7 }) {
        0 => Value::Null,
        1 => Value::Bool(rng.gen()),
        2 => json!(rng.gen_range(-1000i64..1000)),
        3 => json!(rng.gen::<f64>() * 100.0),
        4 => json!([
            "",
            "low",
            "HIGH",
            "create",
            "yes",
            "null",
            "500 mg",
            "Take ibuprofen 200mg"
        ]
        .choose(rng)
        .unwrap()),
        5 => Value::Array(
            (0..rng.gen_range(0..3))
                .map(|_| random_json(rng, depth - 1))
                .collect(),
        ),
        _ => {
            let mut m = Map::new();
            for _ in 0..rng.gen_range(0..3) {
                m.insert(
                    format!("k{}", rng.gen_range(0..9)),
                    random_json(rng, depth - 1),
                );
            }
            Value::Object(m)
        }
    }
}

fn truncate_at_char(s: &str, rng: &mut StdRng) -> String {
    let cuts: Vec<usize> = s.char_indices().map(|(i, _)| i).collect();
    s[..*cuts.choose(rng).unwrap_or(&0)].to_owned()
}

/// One damaged variant of `seed`, drawn from the mutation families.
fn mutate(seed: &Value, enum_key: &str, rng: &mut StdRng) -> String {
    let keys: Vec<String> = seed.as_object().unwrap().keys().cloned().collect();
    let mut v = seed.clone();
    let obj = v.as_object_mut().unwrap();
    match rng.gen_range(0..11) {
        0 => {
            obj.remove(keys.choose(rng).unwrap());
            v.to_string()
        }
        1 => {
            obj.insert(
                format!("extra_{}", rng.gen_range(0..99)),
                random_json(rng, 2),
            );
            v.to_string()
        }
        2 => {
            let k = keys.choose(rng).unwrap().clone();
            obj.insert(k, random_json(rng, 2));
            v.to_string()
        }
        3 => {
            let token = [
                "HIGH", "Low", "critical", "", "moderate", "book", "delete", "CREATE", "urgent",
            ]
            .choose(rng)
            .unwrap();
            obj.insert(enum_key.to_owned(), json!(token));
            v.to_string()
        }
        4 => {
            let s = v.to_string();
            format!("{{\"{enum_key}\":{},{}", obj_value(seed, enum_key), &s[1..])
        }
        5 => truncate_at_char(&v.to_string(), rng),
        6 => {
            let prose = [
                "Sure! Here is the JSON:",
                "Answer:",
                "I think",
                "```json",
                "Note: consult a doctor.",
            ];
            let p = prose.choose(rng).unwrap();
            match rng.gen_range(0..3) {
                0 => format!("{p} {v}"),
                1 => format!("{v}\n{p}"),
                _ => format!("```json\n{v}\n```"),
            }
        }
        7 => {
            let n = rng.gen_range(0..64);
            (0..n)
                .map(|_| char::from_u32(rng.gen_range(0x20..0x7ff)).unwrap_or('?'))
                .collect()
        }
        8 => serde_json::to_string_pretty(&v).unwrap(),
        9 => match rng.gen_range(0..2) {
            0 => json!([v]).to_string(),
            _ => json!({"result": v}).to_string(),
        },
        _ => {
            let mut s = v.to_string();
            for _ in 0..rng.gen_range(1..4) {
                let i = rng.gen_range(0..s.len());
                if s.is_char_boundary(i) {
                    s.insert(i, *[',', '}', '"', ':', ' ', 'x'].choose(rng).unwrap());
                }
            }
            s
        }
    }
}

fn obj_value(v: &Value, key: &str) -> Value {
    v[key].clone()
}

const FUZZ_CASES: usize = 2000;

fn schema_fuzz_totality() -> Outcome_ {
    let started = Instant::now();
    let mut rng = StdRng::seed_from_u64(0x5eed_0001);
    let t = TemplateSet::embedded();
    let lex = EmergencyLexicon::embedded();
    let deny = PrescriptionDenyList::embedded();
    let c = compliance();
    let sessions: Vec<SessionContext> = [
        None,
        Some(Role::Patient),
        Some(Role::Doctor),
        Some(Role::Auditor),
    ]
    .into_iter()
    .map(|r| session(&c, r))
    .collect();
    let fixed_clock = FixedClock::on(today());

    let symptom_seeds = [
        json!({"condition": "flu", "severity": "medium", "follow_up": false}),
        json!({"condition": null, "severity": "unknown", "follow_up": true}),
        json!({"condition": "allergy", "severity": "low", "follow_up": true}),
    ];
    let medication_seeds = [
        json!({"advice": ["Drink plenty of fluids", "Rest for 24-48 hours", "Consider acetaminophen for fever"],
               "reasoning": "Supportive care can help manage mild flu-like symptoms.", "escalation": false}),
        json!({"advice": [], "reasoning": "unclear symptoms", "escalation": true}),
    ];
    let appointment_seeds = [
        json!({"action": "create", "date": "2025-04-10", "reason": "routine follow-up", "authorized": true}),
        json!({"action": "lookup", "date": null, "reason": "check", "authorized": false}),
        json!({"action": "cancel", "date": "2025-06-01", "reason": "travel", "authorized": true}),
    ];

    let mut parsed = [0usize; 3];
    for i in 0..FUZZ_CASES {
        let raw = mutate(
            symptom_seeds.choose(&mut rng).unwrap(),
            "severity",
            &mut rng,
        );
        let run = run_symptom_checker(
            "my nose is runny",
            Language::En,
            &t,
            &fixed(raw.clone()),
            &lex,
        );
        let typed =
            parse_symptom_assessment(&String::from_utf8(canonical_serialize(&run.value)).unwrap());
        ensure!(
            typed.as_ref() == Ok(&run.value),
            "symptom case {i}: output is not a valid value"
        );
        match (run.disposition, parse_symptom_assessment(&raw)) {
            (Disposition::Parsed, Ok(p)) => {
                ensure!(p == run.value, "symptom case {i}: parsed value altered");
                parsed[0] += 1;
            }
            (Disposition::SchemaFallback, Err(_)) => {
                ensure!(
                    run.value == SymptomAssessment::unclear(),
                    "symptom case {i}: wrong fallback"
                )
            }
            (d, p) => {
                return Err(format!(
                    "symptom case {i}: disposition {d:?} vs parse {p:?} for {raw:?}"
                ))
            }
        }
    }
    for i in 0..FUZZ_CASES {
        let raw = mutate(
            medication_seeds.choose(&mut rng).unwrap(),
            "escalation",
            &mut rng,
        );
        let run = run_medication_agent(
            "mild cough",
            Language::En,
            &t,
            &fixed(raw.clone()),
            &lex,
            &deny,
        );
        let typed =
            parse_medication_advice(&String::from_utf8(canonical_serialize(&run.value)).unwrap());
        ensure!(
            typed.as_ref() == Ok(&run.value),
            "medication case {i}: output is not a valid value"
        );
        match (run.disposition, parse_medication_advice(&raw)) {
            (Disposition::Parsed, Ok(p)) => {
                ensure!(p == run.value, "medication case {i}: parsed value altered");
                parsed[1] += 1;
            }
            (Disposition::SchemaFallback, Err(_)) | (Disposition::PostFilter, Ok(_)) => {
                ensure!(
                    run.value == MedicationAdvice::fallback(),
                    "medication case {i}: wrong fallback"
                )
            }
            (d, p) => {
                return Err(format!(
                    "medication case {i}: disposition {d:?} vs parse {p:?}"
                ))
            }
        }
    }
    let window = today()..=today() + Days::days(DATE_WINDOW_DAYS);
    for i in 0..FUZZ_CASES {
        let raw = mutate(
            appointment_seeds.choose(&mut rng).unwrap(),
            "action",
            &mut rng,
        );
        let s = sessions.choose(&mut rng).unwrap();
        let run = run_appointment_agent(
            "book",
            Language::En,
            s,
            &t,
            &fixed(raw.clone()),
            &fixed_clock,
        );
        let typed =
            parse_appointment_intent(&String::from_utf8(canonical_serialize(&run.value)).unwrap());
        ensure!(
            typed.as_ref() == Ok(&run.value),
            "appointment case {i}: output is not a valid value"
        );
        match (run.disposition, parse_appointment_intent(&raw)) {
            (Disposition::Parsed, Ok(p)) => {
                let expected = AppointmentIntent {
                    date: p.date.filter(|d| window.contains(d)),
                    authorized: authorized_for(s.role()),
                    ..p
                };
                ensure!(
                    expected == run.value,
                    "appointment case {i}: parsed value altered"
                );
                parsed[2] += 1;
            }
            (Disposition::SchemaFallback, Err(_)) => {
                ensure!(
                    run.value == AppointmentIntent::invalid(),
                    "appointment case {i}: wrong fallback"
                )
            }
            (d, p) => {
                return Err(format!(
                    "appointment case {i}: disposition {d:?} vs parse {p:?}"
                ))
            }
        }
    }
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(format!(
        "{FUZZ_CASES} cases per agent, parsed {}/{}/{} rest fallback, {:.2}s",
        parsed[0],
        parsed[1],
        parsed[2],
        elapsed.as_secs_f64()
    ))
}

// ------------------------------------------------------------ safety

fn emergency_dominance() -> Outcome_ {
    let raw: std::collections::BTreeMap<String, Vec<String>> = serde_json::from_str(
        &FixtureSource::Embedded
            .read("lexicon/emergency.json")
            .unwrap(),
    )
    .unwrap();
    let t = TemplateSet::embedded();
    let lex = EmergencyLexicon::embedded();
    let deny = PrescriptionDenyList::embedded();
    type Behavior =
        Box<dyn Fn(&PromptTemplate, &str) -> Result<String, AdapterError> + Send + Sync>;
    let behaviors: Vec<(&str, Behavior)> = vec![
        (
            "answers low severity",
            Box::new(|tpl: &PromptTemplate, _: &str| {
                Ok(match tpl.schema_id().as_str() {
                    "symptom_assessment" => {
                        r#"{"condition":"cold","severity":"low","follow_up":false}"#
                    }
                    _ => r#"{"advice":["Rest"],"reasoning":"It is minor.","escalation":false}"#,
                }
                .to_owned())
            }),
        ),
        (
            "answers prose",
            Box::new(|_: &PromptTemplate, _: &str| Ok("You are fine, relax.".to_owned())),
        ),
        (
            "echoes input",
            Box::new(|_: &PromptTemplate, input: &str| Ok(input.to_owned())),
        ),
        (
            "unavailable",
            Box::new(|_: &PromptTemplate, _: &str| Err(AdapterError::Unavailable("down".into()))),
        ),
        (
            "panics",
            Box::new(|_: &PromptTemplate, _: &str| panic!("adapter crashed")),
        ),
    ];
    let previous_hook = std::panic::take_hook();
    std::panic::set_hook(Box::new(|_| {}));
    let mut cases = 0;
    let mut failures = Vec::new();
    for (language, terms) in &raw {
        for term in terms {
            for phrase in [
                term.clone(),
                format!("since this morning {term}, please help"),
            ] {
                for (name, behavior) in &behaviors {
                    let l: Language = language.parse().unwrap();
                    let s = run_symptom_checker(&phrase, l, &t, &&**behavior, &lex);
                    let m = run_medication_agent(&phrase, l, &t, &&**behavior, &lex, &deny);
                    cases += 1;
                    if !(s.value.severity == Severity::High
                        && s.value.follow_up
                        && m.value.escalation
                        && m.value.advice.is_empty())
                    {
                        failures.push(format!("{language}:{term} / {name}"));
                    }
                }
            }
        }
    }
    std::panic::set_hook(previous_hook);
    ensure!(
        failures.is_empty(),
        "{} failures, first: {}",
        failures.len(),
        failures[0]
    );
    Ok(format!("{cases} phrase x behavior cases, all escalated"))
}

fn authorization_sovereignty() -> Outcome_ {
    let c = compliance();
    let t = TemplateSet::embedded();
    let fixed_clock = FixedClock::on(today());
    let mut cases = 0;
    for asserted in [true, false] {
        for action in ["create", "update", "cancel", "lookup"] {
            let raw = json!({"action": action, "date": "2025-04-10", "reason": "routine follow-up", "authorized": asserted})
                .to_string();
            for role in [
                None,
                Some(Role::Patient),
                Some(Role::Doctor),
                Some(Role::Auditor),
            ] {
                let s = session(&c, role);
                let run = run_appointment_agent(
                    "book",
                    Language::En,
                    &s,
                    &t,
                    &fixed(raw.clone()),
                    &fixed_clock,
                );
                ensure!(
                    run.value.authorized == authorized_for(role),
                    "{role:?} asserted={asserted} action={action}: got {}",
                    run.value.authorized
                );
                cases += 1;
            }
        }
    }
    // The same through the orchestrator with the shipped stub rules.
    let orch = Orchestrator::new(
        ToolRegistry::with_agents(AgentRuntime::new(
            Arc::new(StubAdapter::embedded()),
            clock(),
        )),
        LanguageDetector::embedded(),
        c.clone(),
    );
    for role in [
        None,
        Some(Role::Patient),
        Some(Role::Doctor),
        Some(Role::Auditor),
    ] {
        let s = session(&c, role);
        let out = orch
            .call_tool("appointment", "book an appointment", None, &s)
            .map_err(|e| e.to_string())?;
        ensure!(
            out.output["authorized"] == json!(authorized_for(role)),
            "orchestrated {role:?}"
        );
        cases += 1;
    }
    let expected = [false, true, true, false];
    ensure!(
        [
            None,
            Some(Role::Patient),
            Some(Role::Doctor),
            Some(Role::Auditor)
        ]
        .map(authorized_for)
            == expected,
        "policy function changed"
    );
    Ok(format!("{cases} cases, stub assertion never honored"))
}

// ------------------------------------------------------------ crypto

fn crypto_correctness() -> Outcome_ {
    let started = Instant::now();
    let file: Value = serde_json::from_str(
        &std::fs::read_to_string(bundled_dir().join("oracles/aes256gcm_kat.json")).unwrap(),
    )
    .unwrap();
    let hexf = |v: &Value, k: &str| hex::decode(v[k].as_str().unwrap()).unwrap();
    let vectors = file["vectors"].as_array().unwrap();
    for v in vectors {
        let key: [u8; 32] = hexf(v, "key").try_into().unwrap();
        let nonce: [u8; 12] = hexf(v, "nonce").try_into().unwrap();
        let aad = v["aad"].as_str().unwrap();
        let ring = KeyRing::new(SecretKey::from_bytes(key));
        let sealed = encrypt_field_with_nonce(&hexf(v, "plaintext"), &ring, aad, nonce)
            .map_err(|e| e.to_string())?;
        ensure!(
            sealed.ciphertext == hexf(v, "ciphertext"),
            "{} ciphertext",
            v["name"]
        );
        ensure!(sealed.tag.to_vec() == hexf(v, "tag"), "{} tag", v["name"]);
        ensure!(
            decrypt_field(&sealed, &ring, aad).ok() == Some(hexf(v, "plaintext")),
            "{} open",
            v["name"]
        );
    }

    let mut rng = StdRng::seed_from_u64(0x5eed_0002);
    let ring = KeyRing::generate().map_err(|e| e.to_string())?;
    let mut samples = Vec::new();
    for i in 0..10_000 {
        let mut pt = vec![0u8; rng.gen_range(0..256)];
        rng.fill_bytes(&mut pt);
        let aad = format!(
            "p-{}/history[{}].note",
            rng.gen_range(0..10_000),
            rng.gen_range(0..50)
        );
        let sealed = encrypt_field(&pt, &ring, &aad).map_err(|e| e.to_string())?;
        ensure!(
            decrypt_field(&sealed, &ring, &aad).ok().as_deref() == Some(&pt[..]),
            "round trip {i}"
        );
        if i < 1000 {
            samples.push((sealed, aad));
        }
    }
    let mut counts = [0usize; 4];
    for (i, (sealed, aad)) in samples.into_iter().enumerate() {
        let mut bad = sealed.clone();
        let mut bad_aad = aad.into_bytes();
        let target = if i % 4 == 0 && bad.ciphertext.is_empty() {
            1
        } else {
            i % 4
        };
        let flip = |bytes: &mut [u8], rng: &mut StdRng| {
            let bit = rng.gen_range(0..bytes.len() * 8);
            bytes[bit / 8] ^= 1 << (bit % 8);
        };
        match target {
            0 => flip(&mut bad.ciphertext, &mut rng),
            1 => flip(&mut bad.tag, &mut rng),
            2 => flip(&mut bad.nonce, &mut rng),
            _ => {
                // Stay within ASCII so the AAD remains a valid string.
                let i = rng.gen_range(0..bad_aad.len());
                bad_aad[i] ^= 1 << rng.gen_range(0..6);
            }
        }
        counts[target] += 1;
        let bad_aad = String::from_utf8(bad_aad).unwrap();
        ensure!(
            decrypt_field(&bad, &ring, &bad_aad) == Err(CryptoError::AuthFailure),
            "flip {i} (target {target}) was not rejected"
        );
    }
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    Ok(format!(
        "{} KAT vectors, 10000 round trips, 1000 flips (ct {} / tag {} / nonce {} / aad {}) rejected, {:.2}s",
        vectors.len(),
        counts[0],
        counts[1],
        counts[2],
        counts[3],
        elapsed.as_secs_f64()
    ))
}

// ------------------------------------------------------------ audit

fn audit_tamper_detection() -> Outcome_ {
    let log = AuditLog::in_memory(clock());
    let roles = [
        Some(Role::Patient),
        Some(Role::Doctor),
        Some(Role::Auditor),
        None,
    ];
    for i in 0..200 {
        log.append(AuditEvent {
            actor_id: format!("actor-{}", i % 7),
            role: roles[i % 4],
            action: ["record.read", "record.write", "tools/call", "consent.grant"][i % 4].into(),
            resource_class: ["own_record", "patient_record", "tool", "consent"][i % 4].into(),
            resource_id: format!("p-{}", 1000 + i % 13),
            outcome: [Outcome::Allow, Outcome::Deny, Outcome::Error][i % 3],
        })
        .map_err(|e| e.to_string())?;
    }
    let entries = log.entries().map_err(|e| e.to_string())?;
    let head = log.head();
    let serialize = |entries: &[AuditEntry]| -> Vec<u8> {
        entries
            .iter()
            .flat_map(|e| {
                let mut line = e.to_line();
                line.push(b'\n');
                line
            })
            .collect()
    };
    ensure!(
        verify_log_bytes(&serialize(&entries), Some(&head)) == VerifyOutcome::Ok,
        "clean chain rejected"
    );

    let fields = [
        "seq",
        "timestamp",
        "actor_id",
        "role",
        "action",
        "resource_class",
        "resource_id",
        "outcome",
        "prev_hash",
        "entry_hash",
    ];
    let mut mutations = 0;
    for (i, field) in (0..entries.len()).flat_map(|i| fields.iter().map(move |f| (i, *f))) {
        let mut copy = entries.clone();
        let e = &mut copy[i];
        match field {
            "seq" => e.seq += 1000,
            "timestamp" => e.timestamp += Days::milliseconds(1),
            "actor_id" => e.actor_id.push('x'),
            "role" => {
                e.role = if e.role.is_some() {
                    None
                } else {
                    Some(Role::Auditor)
                }
            }
            "action" => e.action = "record.delete".into(),
            "resource_class" => e.resource_class = "audit_log".into(),
            "resource_id" => e.resource_id.push('0'),
            "outcome" => {
                e.outcome = if e.outcome == Outcome::Allow {
                    Outcome::Deny
                } else {
                    Outcome::Allow
                }
            }
            "prev_hash" => e.prev_hash.0[0] ^= 1,
            _ => e.entry_hash.0[31] ^= 0x80,
        }
        let want = VerifyOutcome::Tampered {
            first_bad_seq: i as u64,
        };
        let bytes = serialize(&copy);
        ensure!(
            verify_log_bytes(&bytes, None) == want,
            "mutating {field} at {i} not located (serialized)"
        );
        let reparsed = parse_log(&bytes).map_err(|o| format!("{o:?}"))?;
        ensure!(
            verify_chain(&reparsed) == want,
            "mutating {field} at {i} not located (parsed)"
        );
        mutations += 1;
    }

    for i in 0..entries.len() {
        let mut deleted = entries.clone();
        deleted.remove(i);
        ensure!(
            !verify_chain_against(&deleted, &head).is_ok(),
            "deleting {i} undetected"
        );
        if i + 1 < entries.len() {
            ensure!(
                verify_chain(&deleted)
                    == VerifyOutcome::Tampered {
                        first_bad_seq: i as u64
                    },
                "deleting {i} mislocated"
            );
        }
    }

    // Truncate, then append a self-consistent forged tail of the same length.
    for cut in [0usize, 1, 50, 150, 199] {
        let forged_log = AuditLog::in_memory(clock());
        for e in &entries[..cut] {
            forged_log
                .append(AuditEvent {
                    actor_id: e.actor_id.clone(),
                    role: e.role,
                    action: e.action.clone(),
                    resource_class: e.resource_class.clone(),
                    resource_id: e.resource_id.clone(),
                    outcome: e.outcome,
                })
                .map_err(|e| e.to_string())?;
        }
        for k in cut..entries.len() {
            forged_log
                .append(AuditEvent {
                    actor_id: "intruder".into(),
                    role: None,
                    action: "noop".into(),
                    resource_class: "tool".into(),
                    resource_id: format!("{k}"),
                    outcome: Outcome::Allow,
                })
                .map_err(|e| e.to_string())?;
        }
        let forged = forged_log.entries().map_err(|e| e.to_string())?;
        ensure!(
            verify_chain(&forged).is_ok(),
            "forged chain should be internally consistent"
        );
        ensure!(
            !verify_chain_against(&forged, &head).is_ok(),
            "forged tail after {cut} undetected"
        );
        ensure!(
            !verify_chain_against(&entries[..cut], &head).is_ok(),
            "truncation at {cut} undetected"
        );
    }
    Ok(format!("{mutations} single-field mutations located exactly; 200 deletions and 5 forged tails detected"))
}

// ------------------------------------------------------------ rbac

fn rbac_exhaustiveness() -> Outcome_ {
    use Action::*;
    use ResourceClass::*;
    // Independent statement of the allow matrix.
    let allowed = [
        (Role::Patient, Read, OwnRecord),
        (Role::Patient, Write, OwnRecord),
        (Role::Patient, Read, Appointment),
        (Role::Patient, Write, Appointment),
        (Role::Patient, Read, Consent),
        (Role::Patient, Write, Consent),
        (Role::Doctor, Read, PatientRecord),
        (Role::Doctor, Write, PatientRecord),
        (Role::Doctor, Read, Appointment),
        (Role::Doctor, Write, Appointment),
        (Role::Auditor, Read, AuditLog),
    ];
    let mut triples = 0;
    let mut decisions = 0u64;
    for consent in [
        None,
        Some(ConsentScope::ReadRecord),
        Some(ConsentScope::WriteRecord),
    ] {
        let c = compliance();
        if let Some(scope) = consent {
            let p = session(&c, Some(Role::Patient));
            c.grant_consent(&p, "p-1", "d-1", scope)
                .map_err(|e| e.to_string())?;
        }
        let base = c.audit_log().len();
        for role in Role::ALL {
            for action in Action::ALL {
                for class in ResourceClass::ALL {
                    if consent.is_none() {
                        triples += 1;
                    }
                    let s = session(&c, Some(role));
                    let listed = allowed.contains(&(role, action, class));
                    let qualified = match (role, class) {
                        (_, AuditLog) => true,
                        (Role::Patient, _) => true,
                        (Role::Doctor, PatientRecord | Appointment) => matches!(
                            (consent, action),
                            (Some(ConsentScope::WriteRecord), _)
                                | (Some(ConsentScope::ReadRecord), Read)
                        ),
                        _ => false,
                    };
                    let got = c.check_access(&s, action, class, Some("p-1"));
                    decisions += 1;
                    ensure!(
                        got.is_allow() == (listed && qualified),
                        "{role:?} {action:?} {class:?} consent={consent:?}: {got:?}"
                    );
                    // Someone else's resource is never the patient's.
                    if role == Role::Patient && class != AuditLog {
                        let foreign = c.check_access(&s, action, class, Some("p-2"));
                        decisions += 1;
                        ensure!(
                            !foreign.is_allow(),
                            "patient reached p-2 via {action:?} {class:?}"
                        );
                    }
                }
            }
        }
        for action in Action::ALL {
            for class in ResourceClass::ALL {
                let got = c.check_access(&session(&c, None), action, class, Some("p-1"));
                decisions += 1;
                ensure!(
                    matches!(got, Decision::Deny(_)),
                    "anonymous allowed {action:?} {class:?}"
                );
            }
        }
        let audited = c.audit_log().len() - base;
        ensure!(
            audited == decisions,
            "{decisions} decisions but {audited} audit entries"
        );
        decisions = 0;
    }
    ensure!(triples == 30, "enumerated {triples} triples");
    ensure!(
        AccessMatrix::standard().triples().count() == allowed.len(),
        "matrix size differs from the reference"
    );
    Ok(format!("{triples} triples x 3 consent states, plus foreign-owner and anonymous; one audit entry each"))
}

// ------------------------------------------------------------ e2e

fn trilingual_e2e() -> Outcome_ {
    let log = install_capture(false);
    let base = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut transcripts = Vec::new();
    let mut summaries = Vec::new();
    for run in 0..2 {
        let report = run_demo(&DemoOptions {
            fixtures: Some(bundled_dir()),
            workdir: base.path().join(format!("run{run}")),
            log: log.clone(),
        })
        .map_err(|e| e.to_string())?;
        if let Some(failed) = report.checks.iter().find(|c| !c.passed) {
            return Err(format!("run {run}: {}", failed.name));
        }
        let status = Command::new(env!("CARGO_BIN_EXE_carebridge"))
            .arg("verify-audit")
            .arg(&report.audit_path)
            .arg("--head")
            .arg(&report.head_path)
            .output()
            .map_err(|e| e.to_string())?;
        ensure!(
            status.status.code() == Some(0),
            "verify-audit exited {:?}",
            status.status.code()
        );
        transcripts.push(report.transcript);
        summaries.push((report.audit_entries, report.audit_summary));
    }
    ensure!(
        transcripts[0] == transcripts[1],
        "transcripts differ between runs"
    );
    ensure!(
        summaries[0] == summaries[1],
        "audit summaries differ between runs"
    );
    ensure!(log.is_some(), "log capture not installed");
    Ok(format!(
        "ar/fr/en turns, {} audit entries, verify-audit exit 0, identical across 2 runs",
        summaries[0].0
    ))
}

// ------------------------------------------------------------ langid

fn language_detection() -> Outcome_ {
    let corpus =
        parse_labeled(&std::fs::read_to_string(bundled_dir().join("langid/eval.tsv")).unwrap());
    ensure!(corpus.len() >= 150, "corpus has {} phrases", corpus.len());
    for l in Language::ALL {
        let n = corpus.iter().filter(|(x, _)| *x == l).count();
        ensure!(n >= 50, "{l} has {n} phrases");
    }
    let detector = LanguageDetector::load(&FixtureSource::dir(bundled_dir())).unwrap();
    let mut correct = 0;
    let mut arabic = (0, 0);
    for (label, phrase) in &corpus {
        let (got, confidence) = detector.detect(phrase).map_err(|e| e.to_string())?;
        if got == *label {
            correct += 1;
        }
        if *label == Language::Ar {
            arabic.1 += 1;
            if got == Language::Ar && confidence == 1.0 && arabic_share(phrase) >= ARABIC_SHARE {
                arabic.0 += 1;
            }
        }
    }
    let accuracy = correct as f64 / corpus.len() as f64;
    if accuracy < 0.95 {
        return Err(format!("accuracy {accuracy:.3}"));
    }
    ensure!(
        arabic.0 == arabic.1,
        "arabic by script rule {}/{}",
        arabic.0,
        arabic.1
    );
    Ok(format!(
        "accuracy {:.1}% on {} phrases; arabic {}/{} via script rule",
        accuracy * 100.0,
        corpus.len(),
        arabic.0,
        arabic.1
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("schema-fuzz totality", schema_fuzz_totality),
        ("emergency dominance", emergency_dominance),
        ("authorization sovereignty", authorization_sovereignty),
        ("crypto correctness", crypto_correctness),
        ("audit tamper detection", audit_tamper_detection),
        ("rbac exhaustiveness", rbac_exhaustiveness),
        ("trilingual end-to-end", trilingual_e2e),
        ("language detection accuracy", language_detection),
    ];
    let mut failed = 0;
    for (name, criterion) in criteria {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(criterion))
            .unwrap_or_else(|_| Err("panicked".to_owned()));
        let ms = started.elapsed().as_millis();
        match outcome {
            Ok(detail) => println!("PASS  {name:<28} {detail} [{ms} ms]"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name:<28} {why} [{ms} ms]");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
