//! Live operation: the wire protocol and the simulation session behind it.

mod protocol;
mod session;

pub use protocol::*;
pub use session::{CommandOutcome, ScenarioLibrary, SessionError, SimSession, TeleopParams};
