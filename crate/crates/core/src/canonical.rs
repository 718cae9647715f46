//! Canonical JSON encoding.
//!
//! Object keys sorted by byte order, no insignificant whitespace, UTF-8
//! output, numbers in shortest round-trip form. This is the exact byte input
//! to audit hashing and the on-disk form of stored documents.

use serde::Serialize;
use serde_json::Value;

/// Canonical bytes of any serializable value.
///
/// Panics only if `value` cannot be represented as JSON (for example a map
/// with non-string keys); no domain type in this crate has that shape.
pub fn canonical_serialize<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let value = serde_json::to_value(value).expect("domain values are JSON-representable");
    canonical_bytes(&value)
}

/// Canonical bytes of an already-built JSON value.
pub fn canonical_bytes(value: &Value) -> Vec<u8> {
    let mut out = Vec::with_capacity(128);
    write_value(value, &mut out);
    out
}

/// Canonical form as a `String`.
pub fn canonical_string<T: Serialize + ?Sized>(value: &T) -> String {
    String::from_utf8(canonical_serialize(value)).expect("serde_json emits UTF-8")
}

fn write_value(value: &Value, out: &mut Vec<u8>) {
    match value {
        Value::Object(map) => {
            let mut entries: Vec<_> = map.iter().collect();
            entries.sort_by(|a, b| a.0.as_bytes().cmp(b.0.as_bytes()));
            out.push(b'{');
            for (i, (key, item)) in entries.into_iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_string(key, out);
                out.push(b':');
                write_value(item, out);
            }
            out.push(b'}');
        }
        Value::Array(items) => {
            out.push(b'[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_value(item, out);
            }
            out.push(b']');
        }
        Value::String(s) => write_string(s, out),
        // Null, Bool and Number already print canonically (ryu / itoa).
        scalar => out.extend_from_slice(scalar.to_string().as_bytes()),
    }
}

fn write_string(s: &str, out: &mut Vec<u8>) {
    out.extend_from_slice(
        serde_json::to_string(s)
            .expect("string serialization is infallible")
            .as_bytes(),
    );
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn keys_are_sorted_and_compact() {
        let mut map = serde_json::Map::new();
        map.insert("b".into(), json!(1));
        map.insert("a".into(), json!(2));
        assert_eq!(canonical_bytes(&Value::Object(map)), br#"{"a":2,"b":1}"#);

        let nested = json!({"z": {"y": [1, {"b": null, "a": true}], "x": "é"}, "a": 0.5});
        assert_eq!(
            canonical_string(&nested),
            r#"{"a":0.5,"z":{"x":"é","y":[1,{"a":true,"b":null}]}}"#
        );
    }

    #[test]
    fn numbers_use_shortest_form() {
        assert_eq!(canonical_string(&json!(0.1)), "0.1");
        assert_eq!(canonical_string(&json!(1e21)), "1e+21");
        assert_eq!(canonical_string(&json!(-7)), "-7");
    }

    #[test]
    fn escapes_control_characters() {
        assert_eq!(canonical_string("a\"b\n\u{1}"), r#""a\"b\n\u0001""#);
    }
}
