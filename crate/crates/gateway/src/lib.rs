//! HTTP gateway for the triage agents: bearer-token authentication, chat,
//! appointments, consent, record access and audit verification, plus the
//! scripted trilingual demo used by the operator CLI.

pub mod accounts;
pub mod app;
pub mod auth;
pub mod config;
pub mod demo;
pub mod error;
pub mod external;
pub mod logging;

pub use app::{build_state, router, AppState, StartupError, MAX_BODY_BYTES};
pub use error::ApiError;

/// Serves `state` on `listener` until `shutdown` resolves.
pub async fn serve(
    state: AppState,
    listener: tokio::net::TcpListener,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}
