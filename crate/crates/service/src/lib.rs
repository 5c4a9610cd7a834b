//! Session service for the Just a Minute game: creates games, streams
//! their events, accepts the human's speech, challenges and appeals, and
//! keeps one append-only log per session on disk.

pub mod config;
pub mod error;
pub mod live;
pub mod routes;
pub mod state;
pub mod store;

pub use config::{ProviderSettings, ServiceConfig};
pub use error::ApiError;
pub use routes::router;
pub use state::{AppState, SessionStatus};
