//! Command-line verbs and the HTTP query service of the font pairing
//! engine.

pub mod commands;
pub mod service;

pub use commands::{run, Cli};
pub use service::{router, AppState};
