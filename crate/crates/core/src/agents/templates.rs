use std::collections::BTreeMap;

use serde_json::Value;

use super::{AgentId, SchemaId};
use crate::canonical::canonical_bytes;
use crate::domain::Language;
use crate::fixtures::{FixtureError, FixtureSource};

/// One loaded prompt template. The body is fixed after load.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    agent_id: AgentId,
    language: Language,
    schema_id: SchemaId,
    body: String,
}

impl PromptTemplate {
    pub fn new(agent_id: AgentId, language: Language, body: impl Into<String>) -> Self {
        PromptTemplate {
            agent_id,
            language,
            schema_id: agent_id.output_schema(),
            body: body.into(),
        }
    }

    pub fn agent_id(&self) -> AgentId {
        self.agent_id
    }

    pub fn language(&self) -> Language {
        self.language
    }

    pub fn schema_id(&self) -> SchemaId {
        self.schema_id
    }

    pub fn body(&self) -> &str {
        &self.body
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TemplateError {
    #[error("missing template {agent}.{language}")]
    MissingTemplate { agent: AgentId, language: Language },
    #[error("template {agent}.{language} declares keys {found:?}, schema expects {expected:?}")]
    SchemaKeys {
        agent: AgentId,
        language: Language,
        found: Vec<String>,
        expected: Vec<String>,
    },
    #[error("template {agent}.{language} has JSON examples that differ from {agent}.en")]
    Examples { agent: AgentId, language: Language },
    #[error(transparent)]
    Fixture(FixtureError),
}

/// The complete (agent, language) template table.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    templates: BTreeMap<(AgentId, Language), PromptTemplate>,
}

impl TemplateSet {
    /// Loads `templates/{agent}.{lang}.txt` for every pair and checks that
    /// the set is complete and structurally uniform across languages.
    pub fn load(source: &FixtureSource) -> Result<Self, TemplateError> {
        let mut templates = BTreeMap::new();
        for agent in AgentId::ALL {
            for language in Language::ALL {
                let rel = format!("templates/{}.{}.txt", agent.as_str(), language.code());
                let body = source.read(&rel).map_err(|e| match e {
                    FixtureError::Missing(_) => TemplateError::MissingTemplate { agent, language },
                    other => TemplateError::Fixture(other),
                })?;
                templates.insert(
                    (agent, language),
                    PromptTemplate::new(agent, language, body),
                );
            }
        }
        let set = TemplateSet { templates };
        set.check_structure()?;
        Ok(set)
    }

    /// Builds a set from explicit templates, applying the same checks.
    pub fn from_templates(
        items: impl IntoIterator<Item = PromptTemplate>,
    ) -> Result<Self, TemplateError> {
        let templates: BTreeMap<_, _> = items
            .into_iter()
            .map(|t| ((t.agent_id, t.language), t))
            .collect();
        for agent in AgentId::ALL {
            for language in Language::ALL {
                if !templates.contains_key(&(agent, language)) {
                    return Err(TemplateError::MissingTemplate { agent, language });
                }
            }
        }
        let set = TemplateSet { templates };
        set.check_structure()?;
        Ok(set)
    }

    pub fn embedded() -> Self {
        TemplateSet::load(&FixtureSource::Embedded).expect("embedded templates are complete")
    }

    pub fn render_prompt(&self, agent: AgentId, language: Language) -> &PromptTemplate {
        self.templates
            .get(&(agent, language))
            .expect("completeness is checked at load")
    }

    pub fn iter(&self) -> impl Iterator<Item = &PromptTemplate> {
        self.templates.values()
    }

    fn check_structure(&self) -> Result<(), TemplateError> {
        for agent in AgentId::ALL {
            let expected: Vec<String> = agent
                .output_schema()
                .output_keys()
                .iter()
                .map(|k| k.to_string())
                .collect();
            let reference = json_examples(self.render_prompt(agent, Language::En).body());
            for language in Language::ALL {
                let body = self.render_prompt(agent, language).body();
                let found = declared_keys(body);
                if found != expected {
                    return Err(TemplateError::SchemaKeys {
                        agent,
                        language,
                        found,
                        expected,
                    });
                }
                if json_examples(body) != reference {
                    return Err(TemplateError::Examples { agent, language });
                }
            }
        }
        Ok(())
    }
}

/// Keys from field declaration lines of the form `- "key": ...`.
fn declared_keys(body: &str) -> Vec<String> {
    body.lines()
        .filter_map(|line| line.strip_prefix("- \""))
        .filter_map(|rest| rest.split_once("\":"))
        .map(|(key, _)| key.to_owned())
        .collect()
}

/// Every balanced `{...}` block in the body that parses as a JSON object,
/// in canonical form and sorted.
fn json_examples(body: &str) -> Vec<Vec<u8>> {
    let bytes = body.as_bytes();
    let mut found = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            if let Some(end) = matching_brace(bytes, i) {
                if let Ok(value @ Value::Object(_)) = serde_json::from_str(&body[i..=end]) {
                    found.push(canonical_bytes(&value));
                    i = end + 1;
                    continue;
                }
            }
        }
        i += 1;
    }
    found.sort();
    found
}

fn matching_brace(bytes: &[u8], start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (offset, &b) in bytes[start..].iter().enumerate() {
        if in_string {
            match (escaped, b) {
                (true, _) => escaped = false,
                (false, b'\\') => escaped = true,
                (false, b'"') => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(start + offset);
                }
            }
            _ => {}
        }
    }
    None
}
