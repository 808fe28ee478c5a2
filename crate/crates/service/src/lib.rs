//! HTTP API and command-line front end for the `dar` engine.
//!
//! | module     | contents                                  |
//! |------------|-------------------------------------------|
//! | [`config`] | service configuration file                |
//! | [`api`]    | `/api` routes, payloads and session store |
//! | [`error`]  | JSON error envelope                       |
//! | [`server`] | startup and graceful shutdown             |
//! | [`cli`]    | the `dar` command                         |

pub mod api;
pub mod cli;
pub mod config;
pub mod error;
pub mod server;

pub use crate::api::{router, AppState};
pub use crate::config::ServiceConfig;
