//! The in-process tool registry. Built once at startup, read-only after.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use serde_json::Value;

use crate::agents::{AdapterError, AgentId, AgentRuntime, SchemaId};
use crate::domain::Language;
use crate::session::SessionContext;

/// Name clients use to request keyword routing instead of a fixed tool.
pub const AUTO_TOOL: &str = "auto";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ToolDescriptor {
    pub name: String,
    pub description: String,
    pub input_schema_id: SchemaId,
    pub output_schema_id: SchemaId,
}

pub struct ToolRequest<'a> {
    pub input: &'a str,
    pub language: Language,
    pub session: &'a SessionContext,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ToolError {
    #[error(transparent)]
    AdapterUnavailable(#[from] AdapterError),
    #[error("internal tool error")]
    Internal,
}

pub type ToolHandler = Arc<dyn Fn(&ToolRequest<'_>) -> Result<Value, ToolError> + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegistryError {
    #[error("tool `{0}` already registered")]
    DuplicateName(String),
    #[error("tool name `{0}` is reserved")]
    ReservedName(String),
}

#[derive(Clone)]
struct Registered {
    descriptor: ToolDescriptor,
    handler: ToolHandler,
}

#[derive(Clone, Default)]
pub struct ToolRegistry {
    tools: BTreeMap<String, Registered>,
}

impl fmt::Debug for ToolRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.tools.keys()).finish()
    }
}

impl ToolRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(
        &mut self,
        descriptor: ToolDescriptor,
        handler: ToolHandler,
    ) -> Result<(), RegistryError> {
        if descriptor.name == AUTO_TOOL {
            return Err(RegistryError::ReservedName(descriptor.name));
        }
        if self.tools.contains_key(&descriptor.name) {
            return Err(RegistryError::DuplicateName(descriptor.name));
        }
        self.tools.insert(
            descriptor.name.clone(),
            Registered {
                descriptor,
                handler,
            },
        );
        Ok(())
    }

    /// A registry holding the three built-in agents.
    pub fn with_agents(runtime: AgentRuntime) -> Self {
        let mut registry = ToolRegistry::new();
        let runtime = Arc::new(runtime);
        for agent in AgentId::ALL {
            let rt = runtime.clone();
            let handler: ToolHandler = Arc::new(move |req: &ToolRequest<'_>| {
                let value = match agent {
                    AgentId::SymptomChecker => {
                        serde_json::to_value(rt.symptom_checker(req.input, req.language)?.value)
                    }
                    AgentId::Medication => {
                        serde_json::to_value(rt.medication(req.input, req.language)?.value)
                    }
                    AgentId::Appointment => serde_json::to_value(
                        rt.appointment(req.input, req.language, req.session)?.value,
                    ),
                };
                value.map_err(|_| ToolError::Internal)
            });
            registry
                .register(builtin_descriptor(agent), handler)
                .expect("built-in names are distinct");
        }
        registry
    }

    pub fn descriptors(&self) -> impl Iterator<Item = &ToolDescriptor> {
        self.tools.values().map(|t| &t.descriptor)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tools.contains_key(name)
    }

    pub fn call(&self, name: &str, request: &ToolRequest<'_>) -> Option<Result<Value, ToolError>> {
        self.tools.get(name).map(|t| (t.handler)(request))
    }
}

fn builtin_descriptor(agent: AgentId) -> ToolDescriptor {
    let description = match agent {
        AgentId::SymptomChecker => "Structured triage of patient-reported symptoms.",
        AgentId::Medication => "Non-prescriptive lifestyle and over-the-counter guidance.",
        AgentId::Appointment => "Parses a scheduling request into an appointment intent.",
    };
    ToolDescriptor {
        name: agent.as_str().to_owned(),
        description: description.to_owned(),
        input_schema_id: SchemaId::AgentInput,
        output_schema_id: agent.output_schema(),
    }
}
