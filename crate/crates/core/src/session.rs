use crate::domain::{Language, Role};
use crate::privacy::ConsentView;

/// Who is making a request. A role exists only for authenticated actors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Actor {
    Anonymous,
    Authenticated { id: String, role: Role },
}

impl Actor {
    pub fn authenticated(id: impl Into<String>, role: Role) -> Self {
        Actor::Authenticated {
            id: id.into(),
            role,
        }
    }

    pub fn id(&self) -> Option<&str> {
        match self {
            Actor::Anonymous => None,
            Actor::Authenticated { id, .. } => Some(id),
        }
    }

    pub fn role(&self) -> Option<Role> {
        match self {
            Actor::Anonymous => None,
            Actor::Authenticated { role, .. } => Some(*role),
        }
    }

    /// Identifier written to audit entries.
    pub fn audit_id(&self) -> &str {
        self.id().unwrap_or("anonymous")
    }
}

/// The only authority input to access decisions.
#[derive(Debug, Clone)]
pub struct SessionContext {
    pub actor: Actor,
    pub language: Language,
    pub consent_view: ConsentView,
}

impl SessionContext {
    pub fn new(actor: Actor, language: Language, consent_view: ConsentView) -> Self {
        SessionContext {
            actor,
            language,
            consent_view,
        }
    }

    pub fn actor_id(&self) -> Option<&str> {
        self.actor.id()
    }

    pub fn role(&self) -> Option<Role> {
        self.actor.role()
    }

    pub fn with_language(mut self, language: Language) -> Self {
        self.language = language;
        self
    }
}
