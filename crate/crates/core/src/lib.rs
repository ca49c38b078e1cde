//! Event-based front-end for MOx gas-sensor arrays.
//!
//! The crate covers the whole signal chain: trace ingestion and synthetic
//! recordings ([`signal`]), first-order band-pass filtering ([`filter`]),
//! rising-edge bout analysis ([`bout`]), a behavioral model of the analog
//! event stages ([`frontend`]) and decoding of the inverse-latency code
//! ([`decode`]). [`pipeline`] and [`report`] back the `moxfront` CLI.

pub mod bout;
pub mod config;
pub mod decode;
pub mod error;
pub mod filter;
pub mod frontend;
pub mod io;
pub mod pipeline;
pub mod report;
pub mod signal;

pub use error::{Error, Result};
