//! Review service: classification on upload, explanations, a moderator
//! queue, and an append-only verdict log.

pub mod api;
pub mod store;

pub use api::{router, serve, AppState, ServiceConfig};
pub use store::{QueueEntry, ReviewVerdict, Status, Store, StoreError, VerdictInput, VerdictKind};

/// Bind address env var; defaults to [`DEFAULT_ADDR`].
pub const ADDR_ENV: &str = "CORELINK_ADDR";
pub const DATA_DIR_ENV: &str = "CORELINK_DATA_DIR";
pub const DEFAULT_ADDR: &str = "127.0.0.1:8080";
