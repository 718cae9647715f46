//! Tool registry, JSON-RPC framing, language detection and intent routing.

pub mod intent;
pub mod langid;
pub mod registry;
pub mod rpc;

pub use intent::classify_intent;
pub use langid::{LangIdError, LanguageDetector};
pub use registry::{
    RegistryError, ToolDescriptor, ToolError, ToolHandler, ToolRegistry, ToolRequest, AUTO_TOOL,
};
pub use rpc::{Orchestrator, RpcError, ToolOutcome};
