//! Known-answer checks against values computed by independent
//! implementations (see the `source` field of each oracle file).

use std::sync::Arc;

use carebridge_core::clock::FixedClock;
use carebridge_core::domain::Role;
use carebridge_core::fixtures::bundled_dir;
use carebridge_core::privacy::{
    decrypt_field, encrypt_field_with_nonce, AuditEvent, AuditLog, ChainHash, KeyRing, Outcome,
    SecretKey,
};
use serde_json::Value;

fn oracle(name: &str) -> Value {
    let path = bundled_dir().join("oracles").join(name);
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn hex_field(v: &Value, key: &str) -> Vec<u8> {
    hex::decode(v[key].as_str().unwrap()).unwrap()
}

#[test]
fn aes256gcm_known_answers() {
    let file = oracle("aes256gcm_kat.json");
    let vectors = file["vectors"].as_array().unwrap();
    assert!(vectors.len() >= 5);
    for v in vectors {
        let key: [u8; 32] = hex_field(v, "key").try_into().unwrap();
        let nonce: [u8; 12] = hex_field(v, "nonce").try_into().unwrap();
        let aad = v["aad"].as_str().unwrap();
        let ring = KeyRing::new(SecretKey::from_bytes(key));
        let sealed =
            encrypt_field_with_nonce(&hex_field(v, "plaintext"), &ring, aad, nonce).unwrap();
        assert_eq!(
            sealed.ciphertext,
            hex_field(v, "ciphertext"),
            "{}",
            v["name"]
        );
        assert_eq!(sealed.tag.to_vec(), hex_field(v, "tag"), "{}", v["name"]);
        assert_eq!(
            decrypt_field(&sealed, &ring, aad).unwrap(),
            hex_field(v, "plaintext")
        );
    }
}

#[test]
fn audit_hashes_match_independent_recomputation() {
    let file = oracle("audit_chain.json");
    let at = file["timestamp"].as_str().unwrap().parse().unwrap();
    let log = AuditLog::in_memory(Arc::new(FixedClock(at)));
    for expected in file["entries"].as_array().unwrap() {
        let role: Option<Role> = serde_json::from_value(expected["role"].clone()).unwrap();
        let outcome: Outcome = serde_json::from_value(expected["outcome"].clone()).unwrap();
        let entry = log
            .append(AuditEvent {
                actor_id: expected["actor_id"].as_str().unwrap().into(),
                role,
                action: expected["action"].as_str().unwrap().into(),
                resource_class: expected["resource_class"].as_str().unwrap().into(),
                resource_id: expected["resource_id"].as_str().unwrap().into(),
                outcome,
            })
            .unwrap();
        let want: ChainHash = expected["entry_hash"].as_str().unwrap().parse().unwrap();
        assert_eq!(entry.entry_hash, want, "seq {}", entry.seq);
    }
}
