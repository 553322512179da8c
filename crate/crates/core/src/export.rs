//! Text formats for event logs and controller traces.

use std::io::{self, Write};

use crate::engine::{Cause, EventLog, TraceRow};

pub const EVENTS_HEADER: &str = "t_recorded_s,t_physical_s,cause";
pub const TRACE_HEADER: &str = "t_s,phase_from,phase_to,event,actions";

pub fn write_events_csv<W: Write>(log: &EventLog, mut w: W) -> io::Result<()> {
    writeln!(w, "{EVENTS_HEADER}")?;
    for r in &log.records {
        writeln!(w, "{},{},{}", r.t_recorded, r.t_physical, r.cause)?;
    }
    Ok(())
}

/// Sidecar `key = value` file describing a log.
pub fn write_meta<W: Write>(log: &EventLog, mut w: W) -> io::Result<()> {
    let m = &log.meta;
    let t = &m.tallies;
    writeln!(w, "seed = {}", m.seed)?;
    writeln!(w, "duration_s = {}", m.duration)?;
    writeln!(w, "config_digest = {}", m.config_digest)?;
    writeln!(w, "mode = {}", m.mode)?;
    writeln!(w, "dead_time_s = {}", m.dead_time)?;
    for cause in Cause::ALL {
        writeln!(w, "count_{} = {}", cause, m.counts.get(cause))?;
    }
    writeln!(w, "count_total = {}", m.counts.total())?;
    writeln!(w, "photons_generated = {}", t.photons_generated)?;
    writeln!(w, "photons_lost_unarmed = {}", t.photons_lost_unarmed)?;
    writeln!(w, "photons_lost_conversion = {}", t.photons_lost_conversion)?;
    writeln!(w, "dark_generated = {}", t.dark_generated)?;
    writeln!(w, "dark_lost_unarmed = {}", t.dark_lost_unarmed)?;
    writeln!(w, "traps_filled = {}", t.traps_filled)?;
    writeln!(w, "traps_released = {}", t.traps_released)?;
    writeln!(w, "traps_remaining = {}", t.traps_remaining)?;
    writeln!(w, "releases_while_armed = {}", t.releases_while_armed)?;
    writeln!(w, "armed_intervals = {}", t.armed_intervals)?;
    writeln!(w, "armed_time_s = {}", t.armed_time)?;
    Ok(())
}

pub fn write_trace_csv<W: Write>(rows: &[TraceRow], mut w: W) -> io::Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for row in rows {
        let actions: Vec<String> = row.actions.iter().map(|a| a.to_string()).collect();
        writeln!(
            w,
            "{},{},{},{},{}",
            row.t,
            row.from,
            row.to,
            row.event.map_or("init", |e| e.name()),
            actions.join(";")
        )?;
    }
    Ok(())
}
