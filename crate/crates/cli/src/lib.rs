//! The `oasis` command-line tool and the HTTP service for labelling
//! sessions.

pub mod commands;
pub mod server;

pub use commands::{execute, Cli};
pub use server::router;

/// Process exit code for a failed command. Library errors map through
/// their category; anything else is a generic failure.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    err.chain()
        .find_map(|e| e.downcast_ref::<oasis_core::Error>())
        .map(|e| e.category().exit_code())
        .unwrap_or(1)
}
