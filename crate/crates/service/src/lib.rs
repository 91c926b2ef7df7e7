//! Command-line tool and local HTTP service around the `lotdesign` solvers.

pub mod api;
pub mod cli;
pub mod config;
pub mod jobs;
pub mod solve;
pub mod store;

pub use api::{router, AppState};
pub use config::Config;

// The service chapter of the guide is compiled and run as a doctest.
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/service.md")]
mod guide {}
