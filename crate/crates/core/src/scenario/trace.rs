//! CSV output of scenario runs.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::mating::{MatingPhase, Transition};
use crate::world::BodyId;

pub const TRACE_HEADER: &str = "time,body,x,y,theta,lambda,water_fraction,mate_state";
pub const TRANSITIONS_HEADER: &str =
    "time,base,effector,from,to,can_insert,interference_locked,locked,solvent_target";

/// Pose and swelling of one body at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub time: f64,
    pub body: BodyId,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub lambda: Option<f64>,
    pub water_fraction: f64,
    pub mate_state: Option<MatingPhase>,
}

/// Floats are written in shortest round-trip form so reruns compare
/// byte-for-byte.
pub fn write_trace_csv<W: Write>(mut w: W, rows: &[TraceRow]) -> io::Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for r in rows {
        let lambda = r.lambda.map(|l| l.to_string()).unwrap_or_default();
        let state = r.mate_state.map(|s| s.as_str()).unwrap_or("");
        writeln!(w, "{},{},{},{},{},{},{},{}", r.time, r.body, r.x, r.y, r.theta, lambda, r.water_fraction, state)?;
    }
    Ok(())
}

pub fn write_transitions_csv<W: Write>(mut w: W, rows: &[Transition]) -> io::Result<()> {
    writeln!(w, "{TRANSITIONS_HEADER}")?;
    for t in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            t.time, t.base, t.effector, t.from, t.to, t.can_insert, t.interference_locked, t.locked, t.solvent_target
        )?;
    }
    Ok(())
}
