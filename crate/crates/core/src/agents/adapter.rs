use std::sync::mpsc;
use std::sync::Arc;
use std::time::Duration;

use regex::Regex;
use serde::Deserialize;
use serde_json::Value;

use super::templates::PromptTemplate;
use super::AgentId;
use crate::fixtures::{FixtureError, FixtureSource};

pub const DEFAULT_ADAPTER_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AdapterError {
    #[error("completion backend timed out")]
    Timeout,
    #[error("completion backend unavailable: {0}")]
    Unavailable(String),
    #[error("completion backend panicked")]
    Panicked,
}

/// A completion backend. Output is untrusted raw text.
pub trait CompletionAdapter: Send + Sync {
    fn complete(&self, template: &PromptTemplate, input: &str) -> Result<String, AdapterError>;
}

impl<F> CompletionAdapter for F
where
    F: Fn(&PromptTemplate, &str) -> Result<String, AdapterError> + Send + Sync,
{
    fn complete(&self, template: &PromptTemplate, input: &str) -> Result<String, AdapterError> {
        self(template, input)
    }
}

#[derive(Debug, Clone)]
enum Matcher {
    Substring(String),
    Regex(Regex),
}

/// One stub rule: a pattern, an optional agent scope, and the raw response.
#[derive(Debug, Clone)]
pub struct StubRule {
    agent: Option<AgentId>,
    matcher: Matcher,
    response: String,
}

impl StubRule {
    /// Case-insensitive substring rule.
    pub fn substring(pattern: &str, response: impl Into<String>) -> Self {
        StubRule {
            agent: None,
            matcher: Matcher::Substring(pattern.to_lowercase()),
            response: response.into(),
        }
    }

    pub fn regex(pattern: &str, response: impl Into<String>) -> Result<Self, regex::Error> {
        Ok(StubRule {
            agent: None,
            matcher: Matcher::Regex(Regex::new(pattern)?),
            response: response.into(),
        })
    }

    pub fn for_agent(mut self, agent: AgentId) -> Self {
        self.agent = Some(agent);
        self
    }

    fn matches(&self, agent: AgentId, input: &str) -> bool {
        if self.agent.is_some_and(|a| a != agent) {
            return false;
        }
        match &self.matcher {
            Matcher::Substring(p) => input.to_lowercase().contains(p.as_str()),
            Matcher::Regex(re) => re.is_match(input),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StubRules {
    pub rules: Vec<StubRule>,
    pub default_response: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RulesFile {
    default_response: String,
    rules: Vec<RuleRecord>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleRecord {
    #[serde(default)]
    agent: Option<AgentId>,
    pattern: String,
    #[serde(default)]
    regex: bool,
    response: Value,
}

#[derive(Debug, thiserror::Error)]
pub enum StubRulesError {
    #[error(transparent)]
    Fixture(#[from] FixtureError),
    #[error("malformed stub rules: {0}")]
    Malformed(String),
}

impl StubRules {
    /// Parses the rules file format: `{"default_response": text, "rules":
    /// [{"agent"?, "pattern", "regex"?, "response"}]}`. A string response is
    /// used verbatim; any other JSON value is sent as compact JSON.
    pub fn from_json(raw: &str) -> Result<Self, StubRulesError> {
        let file: RulesFile =
            serde_json::from_str(raw).map_err(|e| StubRulesError::Malformed(e.to_string()))?;
        let rules = file
            .rules
            .into_iter()
            .map(|r| {
                let response = match r.response {
                    Value::String(s) => s,
                    other => other.to_string(),
                };
                let rule = if r.regex {
                    StubRule::regex(&r.pattern, response)
                        .map_err(|e| StubRulesError::Malformed(e.to_string()))?
                } else {
                    StubRule::substring(&r.pattern, response)
                };
                Ok(match r.agent {
                    Some(agent) => rule.for_agent(agent),
                    None => rule,
                })
            })
            .collect::<Result<_, StubRulesError>>()?;
        Ok(StubRules {
            rules,
            default_response: file.default_response,
        })
    }

    pub fn load(source: &FixtureSource) -> Result<Self, StubRulesError> {
        StubRules::from_json(&source.read("stub/rules.json")?)
    }
}

/// Deterministic offline adapter: first matching rule wins, otherwise the
/// default response.
#[derive(Debug, Clone)]
pub struct StubAdapter {
    rules: StubRules,
}

impl StubAdapter {
    pub fn new(rules: StubRules) -> Self {
        StubAdapter { rules }
    }

    pub fn embedded() -> Self {
        StubAdapter::new(StubRules::load(&FixtureSource::Embedded).expect("embedded rules parse"))
    }

    /// The raw response for `input` under `agent`.
    pub fn stub_complete(&self, agent: AgentId, input: &str) -> &str {
        self.rules
            .rules
            .iter()
            .find(|r| r.matches(agent, input))
            .map(|r| r.response.as_str())
            .unwrap_or(&self.rules.default_response)
    }
}

impl CompletionAdapter for StubAdapter {
    fn complete(&self, template: &PromptTemplate, input: &str) -> Result<String, AdapterError> {
        Ok(self.stub_complete(template.agent_id(), input).to_owned())
    }
}

/// Bounds the time spent waiting on an inner adapter. The call runs on a
/// helper thread; on timeout the thread is left to finish on its own.
pub struct TimeoutAdapter {
    inner: Arc<dyn CompletionAdapter>,
    timeout: Duration,
}

impl TimeoutAdapter {
    pub fn new(inner: Arc<dyn CompletionAdapter>, timeout: Duration) -> Self {
        TimeoutAdapter { inner, timeout }
    }
}

impl CompletionAdapter for TimeoutAdapter {
    fn complete(&self, template: &PromptTemplate, input: &str) -> Result<String, AdapterError> {
        let (tx, rx) = mpsc::sync_channel(1);
        let inner = self.inner.clone();
        let template = template.clone();
        let input = input.to_owned();
        std::thread::Builder::new()
            .name("adapter-call".into())
            .spawn(move || {
                let _ = tx.send(inner.complete(&template, &input));
            })
            .map_err(|e| AdapterError::Unavailable(e.to_string()))?;
        match rx.recv_timeout(self.timeout) {
            Ok(result) => result,
            Err(mpsc::RecvTimeoutError::Timeout) => Err(AdapterError::Timeout),
            Err(mpsc::RecvTimeoutError::Disconnected) => Err(AdapterError::Panicked),
        }
    }
}
