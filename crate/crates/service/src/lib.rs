//! File-backed service around `easel-core`: configuration, an embedded
//! event/document store, the HTTP API and scripted headless runs.

pub mod config;
pub mod http;
pub mod script;
pub mod service;
pub mod store;

use std::sync::{Arc, Mutex};

pub use config::Config;
pub use service::{Service, ServiceError, StartupError};

/// Serves the API on an already bound listener until ctrl-c.
pub async fn serve(listener: tokio::net::TcpListener, service: Service) -> std::io::Result<()> {
    let app = http::router(Arc::new(Mutex::new(service)));
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
