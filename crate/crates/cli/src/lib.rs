//! HTTP management service, blocking client, Graphviz export and the `vsn`
//! operator command line.

pub mod cli;
pub mod client;
pub mod dot;
pub mod server;

pub use cli::run_with;
pub use client::{Client, ClientError};
pub use server::{router, spawn, RunningServer};
