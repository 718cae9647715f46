//! Shipped fixture files: prompt templates, safety lexicons, stub adapter
//! rules and the language-identification corpus.
//!
//! The default set is compiled into the binary. A directory with the same
//! layout can replace it at startup.

use std::path::{Path, PathBuf};

macro_rules! embedded {
    ($($path:literal),* $(,)?) => {
        &[$(($path, include_str!(concat!("../fixtures/", $path)))),*]
    };
}

static EMBEDDED: &[(&str, &str)] = embedded![
    "templates/symptom_checker.en.txt",
    "templates/symptom_checker.fr.txt",
    "templates/symptom_checker.ar.txt",
    "templates/medication.en.txt",
    "templates/medication.fr.txt",
    "templates/medication.ar.txt",
    "templates/appointment.en.txt",
    "templates/appointment.fr.txt",
    "templates/appointment.ar.txt",
    "lexicon/emergency.json",
    "lexicon/prescription_denylist.json",
    "stub/rules.json",
    "langid/train.en.txt",
    "langid/train.fr.txt",
    "langid/eval.tsv",
    "demo/accounts.json",
];

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error("fixture `{0}` not found")]
    Missing(String),
    #[error("fixture `{path}` unreadable: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Where fixture files are read from.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum FixtureSource {
    #[default]
    Embedded,
    Dir(PathBuf),
}

impl FixtureSource {
    pub fn dir(path: impl Into<PathBuf>) -> Self {
        FixtureSource::Dir(path.into())
    }

    /// Reads a fixture by its relative path, e.g. `"stub/rules.json"`.
    pub fn read(&self, rel: &str) -> Result<String, FixtureError> {
        match self {
            FixtureSource::Embedded => EMBEDDED
                .iter()
                .find(|(p, _)| *p == rel)
                .map(|(_, body)| (*body).to_owned())
                .ok_or_else(|| FixtureError::Missing(rel.to_owned())),
            FixtureSource::Dir(root) => read_file(root, rel),
        }
    }
}

fn read_file(root: &Path, rel: &str) -> Result<String, FixtureError> {
    let path = root.join(rel);
    std::fs::read_to_string(&path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            FixtureError::Missing(rel.to_owned())
        } else {
            FixtureError::Io {
                path: rel.to_owned(),
                source,
            }
        }
    })
}

/// Directory of the fixtures bundled with this crate's sources.
pub fn bundled_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}
