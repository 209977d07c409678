//! Command-line front end and HTTP control plane.

pub mod app;
pub mod http;

pub use app::{run, Cli};
