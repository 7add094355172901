//! Command implementations behind the `microforge` binary, kept in a library
//! so integration tests can drive them without spawning processes.

pub mod commands;
pub mod serve;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    /// Runtime failure: unreadable files, physics errors, unreachable waypoints.
    pub const FAILURE: i32 = 1;
    /// A scripted assertion failed.
    pub const ASSERTION: i32 = 2;
    /// The scenario or configuration does not match the schema.
    pub const SCHEMA: i32 = 3;
}
