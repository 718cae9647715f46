//! Core library for a multilingual, privacy-preserving healthcare assistant.
//!
//! Agents turn free text into typed, schema-validated outputs; the
//! orchestrator routes requests to them; the privacy layer decides, encrypts
//! and audits every access to patient data; the record store persists
//! patient documents with PHI encrypted at field level.

pub mod agents;
pub mod canonical;
pub mod clock;
pub mod domain;
pub mod fixtures;
pub mod orchestrator;
pub mod privacy;
pub mod session;
pub mod store;
