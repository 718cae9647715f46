//! JSON-RPC 2.0 framing for `tools/list` and `tools/call`.

use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Map, Value};

use super::intent::classify_intent;
use super::langid::LanguageDetector;
use super::registry::{ToolDescriptor, ToolError, ToolRegistry, ToolRequest, AUTO_TOOL};
use crate::canonical::canonical_bytes;
use crate::domain::Language;
use crate::privacy::{Compliance, Outcome};
use crate::session::SessionContext;

pub const PARSE_ERROR: i64 = -32700;
pub const INVALID_REQUEST: i64 = -32600;
pub const METHOD_NOT_FOUND: i64 = -32601;
pub const INVALID_PARAMS: i64 = -32602;
pub const INTERNAL_ERROR: i64 = -32000;
pub const ADAPTER_UNAVAILABLE: i64 = -32001;

pub const AUDIT_RESOURCE_CLASS: &str = "tool";

/// A JSON-RPC error object. Messages are fixed strings and never contain
/// request content.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, thiserror::Error)]
#[error("{message} ({code})")]
pub struct RpcError {
    pub code: i64,
    pub message: &'static str,
}

impl RpcError {
    pub const fn new(code: i64, message: &'static str) -> Self {
        RpcError { code, message }
    }
}

const E_PARSE: RpcError = RpcError::new(PARSE_ERROR, "parse error");
const E_REQUEST: RpcError = RpcError::new(INVALID_REQUEST, "invalid request");
const E_METHOD: RpcError = RpcError::new(METHOD_NOT_FOUND, "method not found");
const E_TOOL: RpcError = RpcError::new(METHOD_NOT_FOUND, "unknown tool");
const E_PARAMS: RpcError = RpcError::new(INVALID_PARAMS, "invalid params");
const E_EMPTY: RpcError = RpcError::new(INVALID_PARAMS, "empty input");
const E_LANGUAGE: RpcError = RpcError::new(INVALID_PARAMS, "unsupported language");
const E_INTERNAL: RpcError = RpcError::new(INTERNAL_ERROR, "internal error");
const E_ADAPTER: RpcError = RpcError::new(ADAPTER_UNAVAILABLE, "completion backend unavailable");
const E_AUDIT: RpcError = RpcError::new(INTERNAL_ERROR, "audit log unavailable");

/// Result of one tool call.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToolOutcome {
    pub tool: String,
    pub language: Language,
    pub output: Value,
}

/// Routes requests to registered tools and records one audit entry per
/// dispatch.
#[derive(Debug, Clone)]
pub struct Orchestrator {
    registry: Arc<ToolRegistry>,
    detector: Arc<LanguageDetector>,
    compliance: Arc<Compliance>,
}

impl Orchestrator {
    pub fn new(
        registry: ToolRegistry,
        detector: LanguageDetector,
        compliance: Arc<Compliance>,
    ) -> Self {
        Orchestrator {
            registry: Arc::new(registry),
            detector: Arc::new(detector),
            compliance,
        }
    }

    pub fn registry(&self) -> &ToolRegistry {
        &self.registry
    }

    pub fn detector(&self) -> &LanguageDetector {
        &self.detector
    }

    /// Explicit language wins; otherwise the detector decides.
    pub fn resolve_language(&self, input: &str, explicit: Option<Language>) -> Language {
        explicit.unwrap_or_else(|| {
            self.detector
                .detect(input)
                .map(|(l, _)| l)
                .unwrap_or(Language::En)
        })
    }

    fn audit(
        &self,
        session: &SessionContext,
        method: &str,
        tool: &str,
        ok: bool,
    ) -> Result<(), RpcError> {
        let outcome = if ok { Outcome::Allow } else { Outcome::Error };
        self.compliance
            .record(session, method, AUDIT_RESOURCE_CLASS, tool, outcome)
            .map(|_| ())
            .map_err(|_| E_AUDIT)
    }

    fn run_tool(
        &self,
        name: &str,
        input: &str,
        language: Option<Language>,
        session: &SessionContext,
    ) -> (String, Result<ToolOutcome, RpcError>) {
        if input.trim().is_empty() {
            return (name.to_owned(), Err(E_EMPTY));
        }
        let language = self.resolve_language(input, language);
        let tool = if name == AUTO_TOOL {
            classify_intent(input, language).as_str().to_owned()
        } else {
            name.to_owned()
        };
        let session = session.clone().with_language(language);
        let request = ToolRequest {
            input,
            language,
            session: &session,
        };
        let result = match self.registry.call(&tool, &request) {
            None => Err(E_TOOL),
            Some(Ok(output)) => Ok(ToolOutcome {
                tool: tool.clone(),
                language,
                output,
            }),
            Some(Err(ToolError::AdapterUnavailable(_))) => Err(E_ADAPTER),
            Some(Err(ToolError::Internal)) => Err(E_INTERNAL),
        };
        (tool, result)
    }

    /// Calls one tool outside the envelope. Records exactly one audit entry.
    pub fn call_tool(
        &self,
        name: &str,
        input: &str,
        language: Option<Language>,
        session: &SessionContext,
    ) -> Result<ToolOutcome, RpcError> {
        let (tool, result) = self.run_tool(name, input, language, session);
        let audited_name = if self.registry.contains(&tool) || tool == AUTO_TOOL {
            tool.as_str()
        } else {
            "-"
        };
        self.audit(session, "tools/call", audited_name, result.is_ok())?;
        result
    }

    /// Lists registered tools. Records exactly one audit entry.
    pub fn list_tools(&self, session: &SessionContext) -> Result<Vec<ToolDescriptor>, RpcError> {
        self.audit(session, "tools/list", "*", true)?;
        Ok(self.registry.descriptors().cloned().collect())
    }

    /// Handles a raw request body and returns the canonical response bytes.
    pub fn dispatch_bytes(&self, body: &[u8], session: &SessionContext) -> Vec<u8> {
        let response = match serde_json::from_slice::<Value>(body) {
            Ok(request) => self.dispatch(&request, session),
            Err(_) => {
                let audit = self.audit(session, "rpc", "-", false);
                error_response(Value::Null, audit.err().unwrap_or(E_PARSE))
            }
        };
        canonical_bytes(&response)
    }

    /// Handles one parsed request envelope.
    pub fn dispatch(&self, request: &Value, session: &SessionContext) -> Value {
        let (id, parsed) = match parse_envelope(request) {
            Ok(p) => (p.id.clone(), p),
            Err((id, e)) => {
                let audit = self.audit(session, "rpc", "-", false);
                return error_response(id, audit.err().unwrap_or(e));
            }
        };
        match parsed.call {
            Call::List => match self.list_tools(session) {
                Ok(tools) => success_response(id, json!({ "tools": tools })),
                Err(e) => error_response(id, e),
            },
            Call::Invalid(e) => {
                let audit = self.audit(session, parsed.method, "-", false);
                error_response(id, audit.err().unwrap_or(e))
            }
            Call::Tool {
                name,
                input,
                language,
            } => match self.call_tool(name, input, language, session) {
                Ok(outcome) => success_response(
                    id,
                    json!({
                        "tool": outcome.tool,
                        "language": outcome.language,
                        "output": outcome.output,
                    }),
                ),
                Err(e) => error_response(id, e),
            },
        }
    }
}

enum Call<'a> {
    List,
    Tool {
        name: &'a str,
        input: &'a str,
        language: Option<Language>,
    },
    Invalid(RpcError),
}

struct Envelope<'a> {
    id: Value,
    method: &'a str,
    call: Call<'a>,
}

fn valid_id(id: &Value) -> bool {
    matches!(id, Value::String(_) | Value::Number(_) | Value::Null)
}

fn parse_envelope(request: &Value) -> Result<Envelope<'_>, (Value, RpcError)> {
    let Value::Object(obj) = request else {
        return Err((Value::Null, E_REQUEST));
    };
    let id = match obj.get("id") {
        Some(id) if valid_id(id) => id.clone(),
        _ => return Err((Value::Null, E_REQUEST)),
    };
    let allowed = ["jsonrpc", "id", "method", "params"];
    if obj.get("jsonrpc") != Some(&Value::String("2.0".into()))
        || obj.keys().any(|k| !allowed.contains(&k.as_str()))
    {
        return Err((id, E_REQUEST));
    }
    let Some(Value::String(method)) = obj.get("method") else {
        return Err((id, E_REQUEST));
    };
    let call = match method.as_str() {
        "tools/list" => match obj.get("params") {
            None | Some(Value::Null) => Call::List,
            Some(Value::Object(p)) if p.is_empty() => Call::List,
            Some(_) => Call::Invalid(E_PARAMS),
        },
        "tools/call" => parse_call_params(obj.get("params")).unwrap_or_else(Call::Invalid),
        _ => Call::Invalid(E_METHOD),
    };
    Ok(Envelope {
        id,
        method: method.as_str(),
        call,
    })
}

fn only_keys(map: &Map<String, Value>, allowed: &[&str]) -> bool {
    map.keys().all(|k| allowed.contains(&k.as_str()))
}

fn parse_call_params(params: Option<&Value>) -> Result<Call<'_>, RpcError> {
    let Some(Value::Object(params)) = params else {
        return Err(E_PARAMS);
    };
    if !only_keys(params, &["name", "arguments"]) {
        return Err(E_PARAMS);
    }
    let Some(Value::String(name)) = params.get("name") else {
        return Err(E_PARAMS);
    };
    let Some(Value::Object(args)) = params.get("arguments") else {
        return Err(E_PARAMS);
    };
    if !only_keys(args, &["input", "language"]) {
        return Err(E_PARAMS);
    }
    let Some(Value::String(input)) = args.get("input") else {
        return Err(E_PARAMS);
    };
    let language = match args.get("language") {
        None | Some(Value::Null) => None,
        Some(Value::String(code)) => Some(code.parse().map_err(|_| E_LANGUAGE)?),
        Some(_) => return Err(E_LANGUAGE),
    };
    Ok(Call::Tool {
        name,
        input,
        language,
    })
}

fn success_response(id: Value, result: Value) -> Value {
    json!({ "jsonrpc": "2.0", "id": id, "result": result })
}

fn error_response(id: Value, error: RpcError) -> Value {
    json!({ "jsonrpc": "2.0", "id": id, "error": { "code": error.code, "message": error.message } })
}
