//! PHI field manifest and the document seal/open transforms.

use serde_json::{Map, Value};

use crate::canonical::canonical_bytes;
use crate::privacy::{decrypt_field, encrypt_field, CryptoError, EncryptedField, KeyRing};

/// Key under which an encrypted field envelope replaces a PHI value.
pub const ENVELOPE_KEY: &str = "$enc";

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Field(String),
    Each(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Pattern {
    source: String,
    segments: Vec<Segment>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ManifestError {
    #[error("malformed manifest path `{0}`")]
    Malformed(String),
    #[error("manifest path `{0}` does not exist in the patient record schema")]
    UnknownPath(String),
}

/// Field paths holding PHI. Syntax: dot-separated field names, where
/// `name[*]` means every element of the array `name`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhiManifest {
    patterns: Vec<Pattern>,
}

impl PhiManifest {
    /// Parses `paths` and checks each one against `schema_sample`, a record
    /// whose arrays are non-empty.
    pub fn new<'a>(
        paths: impl IntoIterator<Item = &'a str>,
        schema_sample: &Value,
    ) -> Result<Self, ManifestError> {
        let mut patterns = Vec::new();
        for path in paths {
            let pattern = parse_pattern(path)?;
            let mut hits = Vec::new();
            locate(schema_sample, &pattern.segments, String::new(), &mut hits);
            if hits.is_empty() {
                return Err(ManifestError::UnknownPath(path.to_owned()));
            }
            patterns.push(pattern);
        }
        Ok(PhiManifest { patterns })
    }

    /// `full_name`, `date_of_birth` and `history[*].note`.
    pub fn standard() -> Self {
        PhiManifest::new(
            ["full_name", "date_of_birth", "history[*].note"],
            &crate::store::schema_sample(),
        )
        .expect("standard manifest matches the schema")
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.patterns.iter().map(|p| p.source.as_str())
    }

    /// Concrete paths of PHI values present in `doc`, e.g. `history[2].note`.
    pub fn concrete_paths(&self, doc: &Value) -> Vec<String> {
        let mut out = Vec::new();
        for p in &self.patterns {
            locate(doc, &p.segments, String::new(), &mut out);
        }
        out
    }

    /// Replaces every PHI value with an encrypted envelope bound to
    /// `record_id/concrete_path`.
    pub fn seal(
        &self,
        mut doc: Value,
        record_id: &str,
        keyring: &KeyRing,
    ) -> Result<Value, CryptoError> {
        for path in self.concrete_paths(&doc) {
            let slot = pointer_mut(&mut doc, &path).expect("path was just located");
            let aad = format!("{record_id}/{path}");
            let sealed = encrypt_field(&canonical_bytes(slot), keyring, &aad)?;
            let mut envelope = Map::new();
            envelope.insert(
                ENVELOPE_KEY.to_owned(),
                serde_json::to_value(&sealed).expect("envelope serializes"),
            );
            *slot = Value::Object(envelope);
        }
        Ok(doc)
    }

    /// Reverses [`seal`](Self::seal). Every manifest value must be an
    /// envelope that authenticates under its own path.
    pub fn open(
        &self,
        mut doc: Value,
        record_id: &str,
        keyring: &KeyRing,
    ) -> Result<Value, CryptoError> {
        for path in self.concrete_paths(&doc) {
            let slot = pointer_mut(&mut doc, &path).expect("path was just located");
            let envelope = slot
                .as_object()
                .filter(|m| m.len() == 1)
                .and_then(|m| m.get(ENVELOPE_KEY))
                .ok_or(CryptoError::AuthFailure)?;
            let sealed: EncryptedField =
                serde_json::from_value(envelope.clone()).map_err(|_| CryptoError::AuthFailure)?;
            let aad = format!("{record_id}/{path}");
            if sealed.aad != aad {
                return Err(CryptoError::AuthFailure);
            }
            let plain = decrypt_field(&sealed, keyring, &aad)?;
            *slot = serde_json::from_slice(&plain).map_err(|_| CryptoError::AuthFailure)?;
        }
        Ok(doc)
    }
}

fn parse_pattern(path: &str) -> Result<Pattern, ManifestError> {
    let malformed = || ManifestError::Malformed(path.to_owned());
    let segments = path
        .split('.')
        .map(|seg| {
            let (name, each) = match seg.strip_suffix("[*]") {
                Some(name) => (name, true),
                None => (seg, false),
            };
            let valid =
                !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
            match (valid, each) {
                (false, _) => Err(malformed()),
                (true, true) => Ok(Segment::Each(name.to_owned())),
                (true, false) => Ok(Segment::Field(name.to_owned())),
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Pattern {
        source: path.to_owned(),
        segments,
    })
}

fn locate(value: &Value, segments: &[Segment], prefix: String, out: &mut Vec<String>) {
    let Some((first, rest)) = segments.split_first() else {
        out.push(prefix);
        return;
    };
    let join = |name: &str| {
        if prefix.is_empty() {
            name.to_owned()
        } else {
            format!("{prefix}.{name}")
        }
    };
    match first {
        Segment::Field(name) => {
            if let Some(child) = value.get(name) {
                locate(child, rest, join(name), out);
            }
        }
        Segment::Each(name) => {
            if let Some(Value::Array(items)) = value.get(name) {
                for (i, item) in items.iter().enumerate() {
                    locate(item, rest, format!("{}[{i}]", join(name)), out);
                }
            }
        }
    }
}

fn pointer_mut<'a>(value: &'a mut Value, path: &str) -> Option<&'a mut Value> {
    let mut current = value;
    for seg in path.split('.') {
        match seg.split_once('[') {
            Some((name, index)) => {
                let index: usize = index.strip_suffix(']')?.parse().ok()?;
                current = current.get_mut(name)?.get_mut(index)?;
            }
            None => current = current.get_mut(seg)?,
        }
    }
    Some(current)
}
